#pragma once

#include <cmath>
#include <vector>

#include "warpsdf/common.hpp"
#include "warpsdf/quaternion.hpp"

namespace warpsdf {

// Coarse-to-fine positional encoding: identity prefix plus windowed sin/cos
// bands. window_alpha sweeps 0 -> L over training; band k fades in with a
// cosine easing as alpha crosses [k, k+1].
struct PosEncConfig {
  int bands = 6;
  double window_alpha = 1e9;  // >= bands means fully open

  int dim() const { return 3 + 6 * bands; }
};

inline double posenc_window(double window_alpha, int band) {
  double u = window_alpha - double(band);
  u = u < 0.0 ? 0.0 : (u > 1.0 ? 1.0 : u);
  return (1.0 - std::cos(kPi * u)) * 0.5;
}

template <class Real>
void posenc_windows(const PosEncConfig& cfg, Real* out) {
  for (int k = 0; k < cfg.bands; ++k) out[k] = Real(posenc_window(cfg.window_alpha, k));
}

// Scalar-generic encoding matching the fused tape kernel layout:
// [x, y, z, then per band: sin(w x), sin(w y), sin(w z), cos(...) x3].
template <class S, class Real>
void posenc_eval(const SVec3<S>& x, const PosEncConfig& cfg, S* out) {
  out[0] = x[0];
  out[1] = x[1];
  out[2] = x[2];
  for (int k = 0; k < cfg.bands; ++k) {
    Real w = Real(posenc_window(cfg.window_alpha, k));
    Real om = Real(kPi) * Real(std::int64_t(1) << k);
    for (int m = 0; m < 3; ++m) {
      using std::sin; using std::cos;
      out[3 + 6 * k + m] = w * sin(om * x[m]);
      out[6 + 6 * k + m] = w * cos(om * x[m]);
    }
  }
}

}  // namespace warpsdf
