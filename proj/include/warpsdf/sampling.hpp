#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "warpsdf/common.hpp"
#include "warpsdf/volume.hpp"

namespace warpsdf {

// One uniform draw per equal stratum of [near, far]; strictly ascending.
// RngT needs uniform() -> [0,1).
template <class Real, class RngT>
std::vector<Real> stratified_sample(Real near, Real far, int count, RngT& rng) {
  require(count >= 2, "stratified_sample: need at least 2 samples");
  std::vector<Real> d(static_cast<std::size_t>(count));
  Real step = (far - near) / Real(count);
  for (int i = 0; i < count; ++i)
    d[std::size_t(i)] = near + (Real(i) + Real(rng.uniform())) * step;
  return d;
}

// Iterative importance refinement: each round converts the current samples'
// SDF values into interval weights, mixes in a uniform floor for coverage,
// and draws per_round new depths from the inverse CDF. Falls back to uniform
// when every weight is zero. Returns the merged ascending depth set of size
// |initial| + rounds * per_round.
template <class Real, class PhiFn, class RngT>
std::vector<Real> importance_sample(std::vector<Real> depths, PhiFn&& phi_at,
                                    Real lambda, int per_round, int rounds,
                                    Real floor_mass, RngT& rng, Real near = Real(-1),
                                    Real far = Real(-1)) {
  std::vector<Real> phis(depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) phis[i] = phi_at(depths[i]);
  if (near < Real(0)) near = depths.front();
  if (far < Real(0)) far = depths.back();

  for (int round = 0; round < rounds; ++round) {
    const std::size_t n = depths.size();
    // piecewise-constant weights over the sample intervals, plus the two
    // boundary intervals to [near, far] so the floor covers the full range
    const std::size_t ni = n + 1;
    std::vector<Real> w(ni, Real(0)), len(ni), left(ni);
    Real wsum = 0, total_len = 0;
    left[0] = near;
    len[0] = std::max(Real(0), depths[0] - near);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      w[i + 1] = alpha_from_sdf(phis[i], phis[i + 1], lambda);
      left[i + 1] = depths[i];
      len[i + 1] = depths[i + 1] - depths[i];
    }
    left[ni - 1] = depths[n - 1];
    len[ni - 1] = std::max(Real(0), far - depths[n - 1]);
    for (std::size_t i = 0; i < ni; ++i) {
      wsum += w[i];
      total_len += len[i];
    }
    std::vector<Real> cdf(ni + 1);
    cdf[0] = 0;
    for (std::size_t i = 0; i < ni; ++i) {
      Real p;
      if (wsum > Real(0))
        p = (Real(1) - floor_mass) * w[i] / wsum + floor_mass * len[i] / total_len;
      else
        p = len[i] / total_len;  // all-zero weights: uniform round
      cdf[i + 1] = cdf[i] + p;
    }
    std::vector<Real> fresh(static_cast<std::size_t>(per_round));
    for (int s = 0; s < per_round; ++s) {
      Real u = Real(rng.uniform()) * cdf[ni];
      std::size_t hi = std::size_t(std::upper_bound(cdf.begin(), cdf.end(), u) -
                                   cdf.begin());
      std::size_t seg = std::min(ni - 1, hi == 0 ? 0 : hi - 1);
      Real frac = (cdf[seg + 1] > cdf[seg]) ? (u - cdf[seg]) / (cdf[seg + 1] - cdf[seg])
                                            : Real(0.5);
      fresh[std::size_t(s)] = left[seg] + frac * len[seg];
    }
    for (Real d : fresh) {
      auto it = std::lower_bound(depths.begin(), depths.end(), d);
      std::size_t idx = std::size_t(it - depths.begin());
      depths.insert(it, d);
      phis.insert(phis.begin() + std::ptrdiff_t(idx), phi_at(d));
    }
  }
  // guard against exact duplicates so depth sets stay strictly ascending
  for (std::size_t i = 1; i < depths.size(); ++i)
    if (depths[i] <= depths[i - 1])
      depths[i] = std::nextafter(depths[i - 1], std::numeric_limits<Real>::max());
  return depths;
}

}  // namespace warpsdf
