#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "warpsdf/camera.hpp"
#include "warpsdf/common.hpp"

namespace warpsdf {

enum class ShapeKind { Sphere, Ellipsoid, Torus, TwoSphere };
enum class TrajKind { None, Translate, Bend, ScalePulse, SplitGap };
enum class AlbedoKind { Solid, Checker, Gradient };

template <class Real>
Real near_axis_inside_distance(const Vec3<Real>& p, const Vec3<Real>& semi);

// Exact point-ellipsoid distance via bisection on the monotone root function
// sum_i (a_i p_i / (t + a_i^2))^2 = 1 (Eberly's formulation). Returns the
// unsigned distance; the caller applies the inside sign.
template <class Real>
Real ellipsoid_distance(const Vec3<Real>& p_in, const Vec3<Real>& semi) {
  Vec3<Real> p = p_in.cwiseAbs();
  auto f = [&](Real t) {
    Real s = 0;
    for (int i = 0; i < 3; ++i) {
      Real q = semi[i] * p[i] / (t + semi[i] * semi[i]);
      s += q * q;
    }
    return s - Real(1);
  };
  Real a2min = semi.cwiseProduct(semi).minCoeff();
  Real lo, hi;
  Real inside_test = 0;
  for (int i = 0; i < 3; ++i) inside_test += (p[i] / semi[i]) * (p[i] / semi[i]);
  if (inside_test >= Real(1)) {
    lo = Real(0);
    hi = semi.norm() * (p.norm() + semi.maxCoeff());
    while (f(hi) > Real(0)) hi *= Real(2);
  } else {
    lo = -a2min;
    hi = Real(0);
    // f(lo+) -> +inf (for p_i != 0); nudge away from the pole
    lo += a2min * Real(1e-12);
    if (f(lo) < Real(0)) return near_axis_inside_distance(p, semi);
  }
  for (int it = 0; it < 200; ++it) {
    Real mid = (lo + hi) / Real(2);
    if (f(mid) > Real(0))
      lo = mid;
    else
      hi = mid;
    if (hi - lo < Real(1e-15) * (Real(1) + std::abs(hi))) break;
  }
  Real t = (lo + hi) / Real(2);
  Real d2 = 0;
  for (int i = 0; i < 3; ++i) {
    Real xi = semi[i] * semi[i] * p[i] / (t + semi[i] * semi[i]);
    d2 += (p[i] - xi) * (p[i] - xi);
  }
  return std::sqrt(d2);
}

// Degenerate inside case with the point on (or numerically at) a symmetry
// axis: fall back to a dense search over the surface parameterization.
template <class Real>
Real near_axis_inside_distance(const Vec3<Real>& p, const Vec3<Real>& semi) {
  Real best = std::numeric_limits<Real>::max();
  const int n = 256;
  for (int iu = 0; iu <= n; ++iu)
    for (int iv = 0; iv < n; ++iv) {
      Real u = Real(iu) / n * Real(kPi);
      Real v = Real(iv) / n * Real(2 * kPi);
      Vec3<Real> s(semi[0] * std::sin(u) * std::cos(v), semi[1] * std::sin(u) * std::sin(v),
                   semi[2] * std::cos(u));
      best = std::min(best, (p - s).norm());
    }
  return best;
}

// Analytic deforming scene: exact SDF, Lambert-shaded albedo, known Lipschitz
// bound for sphere tracing. Doubles as the dataset generator and the oracle.
template <class Real>
struct AnalyticScene {
  ShapeKind shape = ShapeKind::Sphere;
  TrajKind traj = TrajKind::None;
  AlbedoKind albedo = AlbedoKind::Checker;

  Vec3<Real> center = Vec3<Real>::Zero();
  Real radius = Real(0.3);            // sphere / two-sphere component radius
  Vec3<Real> semi = {Real(0.3), Real(0.22), Real(0.18)};  // ellipsoid
  Real torus_major = Real(0.25), torus_minor = Real(0.1);
  Real split_base = Real(0.10);       // two-sphere half separation at t = 0

  Real amplitude = Real(0.15);
  int frames = 8;

  Vec3<Real> base_color = {Real(0.85), Real(0.45), Real(0.2)};

  Real phase(Real t) const { return Real(2) * Real(kPi) * t / Real(frames); }

  Vec3<Real> translation(Real t) const {
    if (traj != TrajKind::Translate) return Vec3<Real>::Zero();
    return Vec3<Real>(amplitude * std::sin(phase(t)), 0, 0);
  }

  Real bend_angle(Real t) const {
    return traj == TrajKind::Bend ? amplitude * std::sin(phase(t)) : Real(0);
  }

  Real scale_factor(Real t) const {
    return traj == TrajKind::ScalePulse ? Real(1) + Real(0.5) * amplitude * std::sin(phase(t))
                                        : Real(1);
  }

  Real half_separation(Real t) const {
    if (traj == TrajKind::SplitGap)
      return split_base + amplitude * (t / Real(std::max(1, frames - 1)));
    return split_base;
  }

  // Inverse-warps an observed point into the canonical (t = 0 material) frame.
  Vec3<Real> to_material(const Vec3<Real>& x, Real t) const {
    Vec3<Real> p = x - center - translation(t);
    if (traj == TrajKind::Bend) {
      Real ang = -bend_angle(t) * p[1];
      Real c = std::cos(ang), s = std::sin(ang);
      p = Vec3<Real>(c * p[0] - s * p[2], p[1], s * p[0] + c * p[2]);
    }
    if (traj == TrajKind::ScalePulse) p /= scale_factor(t);
    return p;
  }

  Real base_sdf(const Vec3<Real>& p, Real t) const {
    switch (shape) {
      case ShapeKind::Sphere:
        return p.norm() - radius;
      case ShapeKind::Ellipsoid: {
        Real d = ellipsoid_distance(p, semi);
        Real inside = 0;
        for (int i = 0; i < 3; ++i) inside += (p[i] / semi[i]) * (p[i] / semi[i]);
        return inside < Real(1) ? -d : d;
      }
      case ShapeKind::Torus: {
        Real qx = std::sqrt(p[0] * p[0] + p[1] * p[1]) - torus_major;
        return std::sqrt(qx * qx + p[2] * p[2]) - torus_minor;
      }
      case ShapeKind::TwoSphere: {
        Real h = half_separation(t);
        Real d1 = (p - Vec3<Real>(h, 0, 0)).norm() - radius;
        Real d2 = (p + Vec3<Real>(h, 0, 0)).norm() - radius;
        return std::min(d1, d2);
      }
    }
    return Real(0);
  }

  Real sdf(const Vec3<Real>& x, Real t) const {
    Vec3<Real> p = to_material(x, t);
    Real d = base_sdf(p, t);
    if (traj == TrajKind::ScalePulse) d *= scale_factor(t);
    return d;
  }

  // Conservative Lipschitz bound for sphere tracing safety.
  Real lipschitz() const {
    if (traj == TrajKind::Bend) return Real(1) + std::abs(amplitude) * Real(2);
    return Real(1);
  }

  Vec3<Real> normal(const Vec3<Real>& x, Real t, Real h = Real(1e-6)) const {
    Vec3<Real> n;
    for (int m = 0; m < 3; ++m) {
      Vec3<Real> xp = x, xm = x;
      xp[m] += h;
      xm[m] -= h;
      n[m] = (sdf(xp, t) - sdf(xm, t)) / (2 * h);
    }
    Real len = n.norm();
    return len > Real(0) ? Vec3<Real>(n / len) : Vec3<Real>(0, 0, 1);
  }

  Vec3<Real> albedo_at(const Vec3<Real>& x, Real t) const {
    Vec3<Real> p = to_material(x, t);
    switch (albedo) {
      case AlbedoKind::Solid:
        return base_color;
      case AlbedoKind::Checker: {
        auto cell = [](Real v) { return int(std::floor(double(v * 8))) & 1; };
        bool flip = (cell(p[0]) ^ cell(p[1]) ^ cell(p[2])) != 0;
        return flip ? base_color : Vec3<Real>(Real(0.15), Real(0.3), Real(0.8));
      }
      case AlbedoKind::Gradient: {
        Vec3<Real> u = (p / (Real(2) * std::max(radius, semi.maxCoeff()))).array() + Real(0.5);
        return {clamp01(u[0]), clamp01(u[1]), clamp01(u[2])};
      }
    }
    return base_color;
  }

  // Generous world bounds containing the shape over the whole trajectory.
  Aabb<Real> bounds() const {
    Real r = radius;
    if (shape == ShapeKind::Ellipsoid) r = semi.maxCoeff();
    if (shape == ShapeKind::Torus) r = torus_major + torus_minor;
    if (shape == ShapeKind::TwoSphere)
      r = radius + half_separation(Real(frames - 1));
    Real m = r + std::abs(amplitude) + Real(0.1);
    Aabb<Real> b;
    b.lo = center - Vec3<Real>(m, m, m);
    b.hi = center + Vec3<Real>(m, m, m);
    return b;
  }
};

inline ShapeKind shape_kind_from(const std::string& s) {
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "ellipsoid") return ShapeKind::Ellipsoid;
  if (s == "torus") return ShapeKind::Torus;
  if (s == "two_sphere") return ShapeKind::TwoSphere;
  fail("unknown scene shape: ", s);
}

inline TrajKind traj_kind_from(const std::string& s) {
  if (s == "none") return TrajKind::None;
  if (s == "translate") return TrajKind::Translate;
  if (s == "bend") return TrajKind::Bend;
  if (s == "scale_pulse") return TrajKind::ScalePulse;
  if (s == "split_gap") return TrajKind::SplitGap;
  fail("unknown trajectory: ", s);
}

inline AlbedoKind albedo_kind_from(const std::string& s) {
  if (s == "solid") return AlbedoKind::Solid;
  if (s == "checker") return AlbedoKind::Checker;
  if (s == "gradient") return AlbedoKind::Gradient;
  fail("unknown albedo: ", s);
}

// Sphere tracing against the analytic scene. Returns hit depth through *t_hit
// (accurate to hit_eps along the ray) or false on a miss.
template <class Real>
bool sphere_trace(const AnalyticScene<Real>& scene, const Vec3<Real>& origin,
                  const Vec3<Real>& dir, Real time, Real t_near, Real t_far,
                  Real& t_hit, int max_steps = 256, Real hit_eps = Real(1e-5)) {
  Real L = scene.lipschitz();
  Real t = t_near;
  for (int i = 0; i < max_steps && t <= t_far; ++i) {
    Real phi = scene.sdf(origin + t * dir, time);
    if (phi < hit_eps) {
      t_hit = t;
      return true;
    }
    t += phi / L;
  }
  return false;
}

}  // namespace warpsdf
