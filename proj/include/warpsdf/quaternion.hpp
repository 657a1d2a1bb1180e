#pragma once

#include <array>

#include "warpsdf/common.hpp"
#include "warpsdf/dual3.hpp"
#include "warpsdf/scalar_funcs.hpp"

namespace warpsdf {

// Scalar-generic small vectors so the same code runs on plain reals and on
// Dual3 (spatial-tangent) scalars.
template <class S>
using SVec3 = std::array<S, 3>;

template <class S>
struct SE3ParamsT {
  SVec3<S> r;  // log-quaternion rotation
  SVec3<S> a;  // anchor point
  SVec3<S> d;  // displacement
};

template <class Real>
using SE3Params = SE3ParamsT<Real>;

template <class S>
struct QuatT {
  S w, x, y, z;
};

namespace qdetail {
template <class Real>
bool exact_zero(const Real& v) {
  return v == Real(0);
}
template <class Real>
bool exact_zero(const Dual3<Real>& v) {
  return v.v == Real(0) && v.t[0] == Real(0) && v.t[1] == Real(0) && v.t[2] == Real(0);
}
}  // namespace qdetail

// exp of the pure quaternion (0, r): w = cos|r|, vec = sin|r| * r/|r|.
// Written in s = |r|^2 so the r -> 0 limit is the series branch and the
// result has unit norm for any finite r.
template <class S>
QuatT<S> quat_exp(const SVec3<S>& r) {
  S s = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
  S f = sinc_sq(s);
  return {cos_sq(s), r[0] * f, r[1] * f, r[2] * f};
}

// Rotates v by the unit quaternion q: v + 2w (q x v) + 2 q x (q x v).
template <class S>
SVec3<S> quat_rotate(const QuatT<S>& q, const SVec3<S>& v) {
  SVec3<S> t = {S(2) * (q.y * v[2] - q.z * v[1]),
                S(2) * (q.z * v[0] - q.x * v[2]),
                S(2) * (q.x * v[1] - q.y * v[0])};
  return {v[0] + q.w * t[0] + (q.y * t[2] - q.z * t[1]),
          v[1] + q.w * t[1] + (q.z * t[0] - q.x * t[2]),
          v[2] + q.w * t[2] + (q.x * t[1] - q.y * t[0])};
}

// x' = q (x - a) q^-1 + a + d. When the rotation is exactly zero (value and
// tangents) the anchor cancels identically, so the anchored round trip is
// skipped and the identity is exact in floating point as well.
template <class S>
SVec3<S> se3_apply(const SE3ParamsT<S>& p, const SVec3<S>& x) {
  if (qdetail::exact_zero(p.r[0]) && qdetail::exact_zero(p.r[1]) &&
      qdetail::exact_zero(p.r[2])) {
    return {x[0] + p.d[0], x[1] + p.d[1], x[2] + p.d[2]};
  }
  QuatT<S> q = quat_exp(p.r);
  SVec3<S> xm = {x[0] - p.a[0], x[1] - p.a[1], x[2] - p.a[2]};
  SVec3<S> rx = quat_rotate(q, xm);
  return {rx[0] + p.a[0] + p.d[0], rx[1] + p.a[1] + p.d[1], rx[2] + p.a[2] + p.d[2]};
}

// Eigen-typed conveniences for plain reals.
template <class Real>
Eigen::Matrix<Real, 4, 1> quat_exp_vec(const Vec3<Real>& r) {
  QuatT<Real> q = quat_exp<Real>({r[0], r[1], r[2]});
  return {q.w, q.x, q.y, q.z};
}

template <class Real>
Vec3<Real> se3_apply_vec(const Vec3<Real>& r, const Vec3<Real>& a, const Vec3<Real>& d,
                         const Vec3<Real>& x) {
  SE3ParamsT<Real> p{{r[0], r[1], r[2]}, {a[0], a[1], a[2]}, {d[0], d[1], d[2]}};
  SVec3<Real> y = se3_apply(p, {x[0], x[1], x[2]});
  return {y[0], y[1], y[2]};
}

template <class Real>
Mat3<Real> quat_to_matrix(const Eigen::Matrix<Real, 4, 1>& q) {
  Real w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3<Real> R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

}  // namespace warpsdf
