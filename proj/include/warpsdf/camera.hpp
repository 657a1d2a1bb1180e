#pragma once

#include <cmath>

#include "warpsdf/common.hpp"

namespace warpsdf {

// Pinhole camera, +z forward in camera space, pose maps camera to world.
template <class Real>
struct Camera {
  Real fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat4<Real> pose = Mat4<Real>::Identity();

  Mat3<Real> rotation() const { return pose.template topLeftCorner<3, 3>(); }
  Vec3<Real> position() const { return pose.template topRightCorner<3, 1>(); }

  void validate() const {
    require(width > 0 && height > 0 && fx > 0 && fy > 0, "camera: bad intrinsics");
    Mat3<Real> R = rotation();
    Real dev = (R * R.transpose() - Mat3<Real>::Identity()).cwiseAbs().maxCoeff();
    require(dev < Real(1e-6), "camera: pose rotation is not orthonormal (deviation ",
            double(dev), ")");
  }
};

template <class Real>
struct Ray {
  Vec3<Real> origin = Vec3<Real>::Zero();
  Vec3<Real> dir = Vec3<Real>::Zero();  // unit
  Real u = 0, v = 0;                    // continuous image coordinates
  int frame = 0;
  Real near = 0, far = 0;

  Vec3<Real> point_at(Real t) const { return origin + t * dir; }
};

// Back-projects the continuous image point (u, v). Callers tracing pixel
// (i, j) pass its center (i + 0.5, j + 0.5).
template <class Real>
Ray<Real> gen_ray(const Camera<Real>& cam, Real u, Real v, int frame = 0) {
  require(u >= Real(0) && u < Real(cam.width) && v >= Real(0) && v < Real(cam.height),
          "gen_ray: pixel (", double(u), ", ", double(v), ") outside image");
  Vec3<Real> d_cam((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, Real(1));
  Ray<Real> r;
  r.origin = cam.position();
  r.dir = (cam.rotation() * d_cam).normalized();
  r.u = u;
  r.v = v;
  r.frame = frame;
  return r;
}

// Projects a world point; returns false when it is behind the camera.
template <class Real>
bool project(const Camera<Real>& cam, const Vec3<Real>& p, Real& u, Real& v, Real& z) {
  Vec3<Real> pc = cam.rotation().transpose() * (p - cam.position());
  z = pc[2];
  if (z <= Real(0)) return false;
  u = cam.fx * pc[0] / z + cam.cx;
  v = cam.fy * pc[1] / z + cam.cy;
  return true;
}

}  // namespace warpsdf
