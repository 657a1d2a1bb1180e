#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "warpsdf/common.hpp"
#include "warpsdf/volume.hpp"

namespace warpsdf {

// All supervision weights and shapes. eps_trunc <= 0 means "derive from the
// finest grid cell" (2.5 cells) at train setup.
struct LossConfig {
  double w_rgb = 10.0;
  double w_depth = 1.0;
  double w_sdf = 10.0;
  double w_fs = 1.0;
  double w_eik = 0.1;
  double w_smooth = 0.1;
  double w_mask = 0.1;
  double eps_trunc = -1.0;
  double alpha_fs = 5.0;
  double delta_std = -1.0;  // <= 0: 0.01 * scene extent
  // step-based weighting: rgb and eik decay from sched_start x to 1 x over
  // the first sched_frac of training
  double sched_start = 2.0;
  double sched_frac = 0.25;
  bool eikonal_canonical = false;

  void validate() const {
    require(w_rgb >= 0 && w_depth >= 0 && w_sdf >= 0 && w_fs >= 0 && w_eik >= 0 &&
                w_smooth >= 0 && w_mask >= 0,
            "loss weights must be non-negative");
    require(alpha_fs > 0, "alpha_fs must be positive");
  }

  // multiplier applied to a term's weight at the given step fraction
  double schedule_mult(int term, double step_frac) const {
    if (term != 0 && term != 4) return 1.0;  // only rgb (0) and eik (4) decay
    if (step_frac >= sched_frac) return 1.0;
    double u = sched_frac > 0 ? step_frac / sched_frac : 1.0;
    return sched_start + (1.0 - sched_start) * u;
  }
};

inline const char* loss_term_name(int i) {
  static const char* names[7] = {"rgb", "depth", "sdf", "fs", "eik", "smooth", "mask"};
  return names[i];
}

// Truncation-region partition along one ray: b = d_r - d_i; near-surface
// |b| <= eps, free space b > eps; samples behind the surface by more than eps
// belong to neither set.
template <class Real>
void partition_samples(Real d_r, const std::vector<Real>& depths, Real eps,
                       std::vector<int>& s_tr, std::vector<int>& s_fs) {
  require(d_r > Real(0), "partition_samples: invalid ray depth");
  s_tr.clear();
  s_fs.clear();
  for (std::size_t i = 0; i < depths.size(); ++i) {
    Real b = d_r - depths[i];
    if (b > eps)
      s_fs.push_back(int(i));
    else if (b >= -eps)
      s_tr.push_back(int(i));
  }
}

// Per-ray rendering losses (Eq. 9 forms), gated by the ray's mask bit.
template <class Real>
std::pair<Real, Real> loss_render(const Vec3<Real>& c_hat, const Vec3<Real>& c,
                                  Real d_hat, Real d_r, Real mask_bit) {
  Real lr = (c - c_hat).norm() * mask_bit;
  Real ld = std::abs(d_r - d_hat) * mask_bit;
  return {lr, ld};
}

template <class Real>
Real loss_sdf(const std::vector<Real>& phi, const std::vector<Real>& bound,
              const std::vector<int>& s_tr) {
  if (s_tr.empty()) return Real(0);
  Real acc = 0;
  for (int i : s_tr) acc += std::abs(phi[std::size_t(i)] - bound[std::size_t(i)]);
  return acc / Real(s_tr.size());
}

template <class Real>
Real loss_fs(const std::vector<Real>& phi, const std::vector<Real>& bound,
             const std::vector<int>& s_fs, Real alpha_fs) {
  if (s_fs.empty()) return Real(0);
  Real acc = 0;
  for (int i : s_fs) {
    Real p = phi[std::size_t(i)];
    Real e = std::exp(-alpha_fs * p) - Real(1);
    Real lin = p - bound[std::size_t(i)];
    acc += std::max(Real(0), std::max(e, lin));
  }
  return acc / Real(s_fs.size());
}

template <class Real>
Real loss_eik(const std::vector<Vec3<Real>>& grads, const std::vector<int>& samples) {
  if (samples.empty()) return Real(0);
  Real acc = 0;
  for (int i : samples) {
    Real n = grads[std::size_t(i)].norm();
    acc += (Real(1) - n) * (Real(1) - n);
  }
  return acc / Real(samples.size());
}

// Mean squared normal difference under the perturbations, normalized by the
// ray count R (the equation's literal normalizer).
template <class Real>
Real loss_smooth(const std::vector<Vec3<Real>>& grad_a,
                 const std::vector<Vec3<Real>>& grad_b, int total_rays) {
  if (total_rays <= 0) return Real(0);
  Real acc = 0;
  for (std::size_t i = 0; i < grad_a.size(); ++i)
    acc += (grad_a[i] - grad_b[i]).squaredNorm();
  return acc / Real(total_rays);
}

template <class Real>
Real loss_mask(Real mask_bit, Real m_hat) {
  Real m = std::min(std::max(m_hat, Real(1e-6)), Real(1) - Real(1e-6));
  return -(mask_bit * std::log(m) + (Real(1) - mask_bit) * std::log(Real(1) - m));
}

struct LossBreakdown {
  std::array<double, 7> term{};     // per-term means (paper normalizers)
  std::array<double, 7> eff_w{};    // lambda * schedule multiplier
  double total = 0;
  double lambda_value = 0;
};

// Weighted total from per-term means; raises on a non-finite term, naming it.
inline LossBreakdown total_loss(const std::array<double, 7>& term_means,
                                const LossConfig& cfg, double step_frac) {
  const double w[7] = {cfg.w_rgb, cfg.w_depth, cfg.w_sdf, cfg.w_fs,
                       cfg.w_eik, cfg.w_smooth, cfg.w_mask};
  LossBreakdown b;
  b.term = term_means;
  for (int i = 0; i < 7; ++i) {
    require(std::isfinite(term_means[std::size_t(i)]), "non-finite loss term '",
            loss_term_name(i), "'");
    b.eff_w[std::size_t(i)] = w[i] * cfg.schedule_mult(i, step_frac);
    b.total += b.eff_w[std::size_t(i)] * term_means[std::size_t(i)];
  }
  return b;
}

}  // namespace warpsdf
