#pragma once

#include <cmath>

namespace warpsdf {

// Elementary nonlinearities shared by the tape kernels and the scalar
// reference path. All are numerically stable over the full real line.

template <class Real>
Real sigmoid(Real x) {
  if (x >= Real(0)) {
    Real e = std::exp(-x);
    return Real(1) / (Real(1) + e);
  }
  Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class Real>
Real softplus(Real x) {
  // log(1+e^x) = max(x,0) + log1p(e^{-|x|})
  Real m = x > Real(0) ? x : Real(0);
  return m + std::log1p(std::exp(-std::abs(x)));
}

// cos(sqrt(s)), sinc(sqrt(s)) and derivatives in s. Parameterizing the
// quaternion exponential in s = ||r||^2 keeps every kernel smooth through
// r = 0; closed forms switch to series below s0 where they would cancel.

namespace series {
constexpr double kS0 = 1e-3;
}

template <class Real>
Real cos_sq(Real s) {
  if (s < Real(series::kS0))
    return Real(1) + s * (Real(-0.5) + s * (Real(1.0 / 24) + s * Real(-1.0 / 720)));
  return std::cos(std::sqrt(s));
}

template <class Real>
Real sinc_sq(Real s) {  // sin(sqrt(s))/sqrt(s)
  if (s < Real(series::kS0))
    return Real(1) + s * (Real(-1.0 / 6) + s * (Real(1.0 / 120) + s * Real(-1.0 / 5040)));
  Real q = std::sqrt(s);
  return std::sin(q) / q;
}

template <class Real>
Real sinc_sq_d(Real s) {  // d/ds sinc(sqrt(s))
  if (s < Real(series::kS0))
    return Real(-1.0 / 6) + s * (Real(1.0 / 60) + s * Real(-1.0 / 1680));
  return (cos_sq(s) - sinc_sq(s)) / (Real(2) * s);
}

template <class Real>
Real sinc_sq_dd(Real s) {  // d^2/ds^2 sinc(sqrt(s))
  if (s < Real(series::kS0))
    return Real(1.0 / 60) + s * (Real(-1.0 / 840) + s * Real(1.0 / 30240));
  // d/ds [(cos_sq - sinc_sq)/(2s)]
  Real c = cos_sq(s), f = sinc_sq(s), fd = sinc_sq_d(s);
  Real cd = -f / Real(2);  // d/ds cos(sqrt(s))
  return ((cd - fd) * Real(2) * s - Real(2) * (c - f)) / (Real(4) * s * s);
}

template <class Real>
Real cos_sq_d(Real s) {  // d/ds cos(sqrt(s)) = -sinc_sq(s)/2
  return -sinc_sq(s) / Real(2);
}

template <class Real>
Real cos_sq_dd(Real s) {
  return -sinc_sq_d(s) / Real(2);
}

}  // namespace warpsdf
