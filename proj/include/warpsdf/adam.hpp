#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "warpsdf/common.hpp"

namespace warpsdf {

template <class Real>
struct AdamState {
  std::int64_t t = 0;
  std::vector<Real> m;
  std::vector<Real> v;

  void ensure(std::size_t n) {
    if (m.size() != n) {
      m.assign(n, Real(0));
      v.assign(n, Real(0));
    }
  }
};

struct AdamHyper {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update over one parameter vector. The state counter
// increments exactly once per call.
template <class Real>
void adam_step(Real* params, const Real* grads, std::size_t n, AdamState<Real>& st,
               const AdamHyper& h) {
  require(h.lr > 0, "adam_step: lr must be positive");
  require(h.beta1 >= 0 && h.beta1 < 1 && h.beta2 >= 0 && h.beta2 < 1,
          "adam_step: betas must be in [0,1)");
  st.ensure(n);
  st.t += 1;
  const Real b1 = Real(h.beta1), b2 = Real(h.beta2);
  const Real c1 = Real(1) / Real(1 - std::pow(h.beta1, double(st.t)));
  const Real c2 = Real(1) / Real(1 - std::pow(h.beta2, double(st.t)));
  const Real lr = Real(h.lr), eps = Real(h.eps);
  for (std::size_t i = 0; i < n; ++i) {
    Real g = grads[i];
    st.m[i] = b1 * st.m[i] + (Real(1) - b1) * g;
    st.v[i] = b2 * st.v[i] + (Real(1) - b2) * g * g;
    Real mh = st.m[i] * c1;
    Real vh = st.v[i] * c2;
    params[i] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

template <class Real>
void adam_step(std::vector<Real>& params, const std::vector<Real>& grads,
               AdamState<Real>& st, const AdamHyper& h) {
  require(params.size() == grads.size(), "adam_step: param/grad shape mismatch (",
          params.size(), " vs ", grads.size(), ")");
  adam_step(params.data(), grads.data(), params.size(), st, h);
}

}  // namespace warpsdf
