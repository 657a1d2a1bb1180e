#pragma once

#include <cmath>

#include "warpsdf/common.hpp"
#include "warpsdf/scalar_funcs.hpp"

namespace warpsdf {

// Scalar with three forward-mode tangents (one per spatial axis). Drives the
// single-pass Jacobian evaluation and every tape-free gradient query
// (inference normals, mesh normals, oracles).
template <class Real>
struct Dual3 {
  Real v = 0;
  Vec3<Real> t = Vec3<Real>::Zero();

  Dual3() = default;
  Dual3(Real value) : v(value) {}
  Dual3(Real value, const Vec3<Real>& tang) : v(value), t(tang) {}

  static Dual3 seed(Real value, int axis) {
    Dual3 d(value);
    d.t[axis] = Real(1);
    return d;
  }
};

template <class Real> Dual3<Real> operator+(const Dual3<Real>& a, const Dual3<Real>& b) {
  return {a.v + b.v, a.t + b.t};
}
template <class Real> Dual3<Real> operator-(const Dual3<Real>& a, const Dual3<Real>& b) {
  return {a.v - b.v, a.t - b.t};
}
template <class Real> Dual3<Real> operator-(const Dual3<Real>& a) { return {-a.v, -a.t}; }
template <class Real> Dual3<Real> operator*(const Dual3<Real>& a, const Dual3<Real>& b) {
  return {a.v * b.v, a.v * b.t + b.v * a.t};
}
template <class Real> Dual3<Real> operator/(const Dual3<Real>& a, const Dual3<Real>& b) {
  Real inv = Real(1) / b.v;
  return {a.v * inv, (a.t - (a.v * inv) * b.t) * inv};
}
template <class Real> Dual3<Real> operator*(Real c, const Dual3<Real>& a) {
  return {c * a.v, c * a.t};
}
template <class Real> Dual3<Real> operator*(const Dual3<Real>& a, Real c) {
  return {c * a.v, c * a.t};
}
template <class Real> Dual3<Real> operator/(const Dual3<Real>& a, Real c) {
  return {a.v / c, a.t / c};
}
template <class Real> Dual3<Real> operator+(const Dual3<Real>& a, Real c) { return {a.v + c, a.t}; }
template <class Real> Dual3<Real> operator+(Real c, const Dual3<Real>& a) { return {a.v + c, a.t}; }
template <class Real> Dual3<Real> operator-(const Dual3<Real>& a, Real c) { return {a.v - c, a.t}; }
template <class Real> Dual3<Real> operator-(Real c, const Dual3<Real>& a) { return {c - a.v, -a.t}; }

template <class Real> Dual3<Real> exp(const Dual3<Real>& a) {
  Real e = std::exp(a.v);
  return {e, e * a.t};
}
template <class Real> Dual3<Real> sqrt(const Dual3<Real>& a) {
  Real s = std::sqrt(a.v);
  return {s, a.t / (Real(2) * s)};
}
template <class Real> Dual3<Real> sin(const Dual3<Real>& a) {
  return {std::sin(a.v), std::cos(a.v) * a.t};
}
template <class Real> Dual3<Real> cos(const Dual3<Real>& a) {
  return {std::cos(a.v), -std::sin(a.v) * a.t};
}
template <class Real> Dual3<Real> sigmoid_f(const Dual3<Real>& a) {
  Real s = sigmoid(a.v);
  return {s, s * (Real(1) - s) * a.t};
}
template <class Real> Dual3<Real> softplus_f(const Dual3<Real>& a) {
  return {softplus(a.v), sigmoid(a.v) * a.t};
}
template <class Real> Dual3<Real> cos_sq(const Dual3<Real>& a) {
  return {cos_sq(a.v), cos_sq_d(a.v) * a.t};
}
template <class Real> Dual3<Real> sinc_sq(const Dual3<Real>& a) {
  return {sinc_sq(a.v), sinc_sq_d(a.v) * a.t};
}

// Plain-scalar passthroughs so templated code works with S = Real directly.
template <class Real> Real sigmoid_f(Real a) { return sigmoid(a); }
template <class Real> Real softplus_f(Real a) { return softplus(a); }

template <class Real> Real value_of(Real x) { return x; }
template <class Real> Real value_of(const Dual3<Real>& x) { return x.v; }

// Jacobian of a 3-vector map by one 3-tangent forward pass: entry (i,j) =
// d map_i / d x_j. The map is any callable on Dual3 triples.
template <class Real, class F>
Mat3<Real> jacobian_fwd(F&& map, const Vec3<Real>& x) {
  using D = Dual3<Real>;
  std::array<D, 3> in = {D::seed(x[0], 0), D::seed(x[1], 1), D::seed(x[2], 2)};
  std::array<D, 3> out = map(in);
  Mat3<Real> J;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) J(i, j) = out[std::size_t(i)].t[j];
  return J;
}

}  // namespace warpsdf
