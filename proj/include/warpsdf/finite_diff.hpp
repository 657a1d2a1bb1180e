#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "warpsdf/common.hpp"

namespace warpsdf {

// Central-difference oracles. These live on the test/verification side of the
// dual-route contract and must stay independent of the tape.

template <class F>
double finite_diff_1(F&& f, double x, double h) {
  double fp = f(x + h), fm = f(x - h);
  require(std::isfinite(fp) && std::isfinite(fm), "finite_diff: non-finite value");
  return (fp - fm) / (2.0 * h);
}

// Gradient of a scalar function of n reals.
template <class F>
std::vector<double> finite_diff_grad(F&& f, std::vector<double> x, double h) {
  require(h > 0, "finite_diff_grad: h must be positive");
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double xi = x[i];
    x[i] = xi + h;
    double fp = f(x);
    x[i] = xi - h;
    double fm = f(x);
    x[i] = xi;
    require(std::isfinite(fp) && std::isfinite(fm), "finite_diff_grad: non-finite value at coordinate ", i);
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Entrywise Jacobian of a 3-vector map.
template <class Real, class F>
Mat3<Real> finite_diff_jacobian(F&& map, Vec3<Real> x, Real h) {
  Mat3<Real> J;
  for (int j = 0; j < 3; ++j) {
    Vec3<Real> xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    Vec3<Real> fp = map(xp), fm = map(xm);
    for (int i = 0; i < 3; ++i) J(i, j) = (fp[i] - fm[i]) / (Real(2) * h);
  }
  return J;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace warpsdf
