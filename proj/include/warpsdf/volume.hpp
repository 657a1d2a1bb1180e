#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "warpsdf/common.hpp"
#include "warpsdf/scalar_funcs.hpp"

namespace warpsdf {

// Opacity from consecutive SDF samples through the lambda-sharpened sigmoid
// (clamped to [0,1]; the denominator guard only matters deep inside geometry
// where the sigmoid underflows).
template <class Real>
Real alpha_from_sdf(Real phi_i, Real phi_next, Real lambda) {
  Real si = sigmoid(lambda * phi_i);
  Real sn = sigmoid(lambda * phi_next);
  Real a = (si - sn) / std::max(si, Real(1e-12));
  return a > Real(0) ? (a > Real(1) ? Real(1) : a) : Real(0);
}

// Per-ray sample records produced by rendering and consumed by every loss.
template <class Real>
struct RaySampleSet {
  std::vector<Real> depth;            // ascending
  std::vector<Vec3<Real>> x_obs;      // observed points
  std::vector<Vec3<Real>> x_canon;    // canonical coordinates
  std::vector<Real> ambient;          // [n x m] hyper coordinates
  int ambient_dim = 0;
  std::vector<Real> phi;
  std::vector<Real> alpha;
  std::vector<Real> T;                // transmittance, T[0] = 1
  std::vector<Real> weight;           // T * alpha
  std::vector<Vec3<Real>> color;
  std::vector<std::uint8_t> oob;      // out-of-bounds flag per sample

  std::size_t size() const { return depth.size(); }
};

template <class Real>
struct RayRender {
  Vec3<Real> rgb = Vec3<Real>::Zero();
  Real depth = 0;
  Real mask = 0;
};

// Fills alpha/T/weight from phi and lambda. The final sample pairs with a
// virtual next sample at its own SDF value, so its alpha is zero
// (back-extrapolation is the config alternative).
template <class Real>
void fill_weights(RaySampleSet<Real>& s, Real lambda, bool extrapolate_last = false) {
  const std::size_t n = s.size();
  s.alpha.resize(n);
  s.T.resize(n);
  s.weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Real next;
    if (i + 1 < n)
      next = s.phi[i + 1];
    else
      next = extrapolate_last && n >= 2 ? Real(2) * s.phi[n - 1] - s.phi[n - 2]
                                        : s.phi[n - 1];
    s.alpha[i] = alpha_from_sdf(s.phi[i], next, lambda);
  }
  Real T = 1;
  for (std::size_t i = 0; i < n; ++i) {
    s.T[i] = T;
    s.weight[i] = T * s.alpha[i];
    T *= Real(1) - s.alpha[i];
  }
}

// Expected color/depth plus accumulated opacity as the mask value.
template <class Real>
RayRender<Real> composite_ray(const RaySampleSet<Real>& s) {
  RayRender<Real> r;
  for (std::size_t i = 0; i < s.size(); ++i) {
    r.rgb += s.weight[i] * s.color[i];
    r.depth += s.weight[i] * s.depth[i];
    r.mask += s.weight[i];
  }
  return r;
}

}  // namespace warpsdf
