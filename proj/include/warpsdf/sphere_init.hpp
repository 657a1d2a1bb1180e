#pragma once

#include <cmath>
#include <vector>

#include "warpsdf/adam.hpp"
#include "warpsdf/rng.hpp"
#include "warpsdf/scene_model.hpp"

namespace warpsdf {

template <class Real>
struct SphereInitConfig {
  Vec3<Real> center = Vec3<Real>::Zero();
  Real radius = Real(0.25);
  int max_steps = 800;
  int batch = 2048;
  double lr = 2e-3;
  double tol_frac = 0.002;  // stop when mean |phi - target| < tol_frac * radius
};

struct SphereInitReport {
  double mean_abs_residual = 0;
  int steps = 0;
  bool reached = false;
};

// Regresses the grid and geometry decoder toward the analytic sphere SDF over
// uniformly sampled canonical points (ambient coordinates zero). Only the
// grid block and the geometry decoder's layers are updated.
template <class Real>
SphereInitReport sphere_init(SceneModel<Real>& model, const SphereInitConfig<Real>& cfg,
                             Rng& rng) {
  require(cfg.radius > Real(0), "sphere_init: radius must be positive");
  const auto& g = model.grid;
  Vec3<Real> lo = g.origin;
  Vec3<Real> hi = g.origin + Vec3<Real>::Constant(g.spacing * Real(g.res - 1));
  for (int m = 0; m < 3; ++m)
    require(cfg.center[m] - cfg.radius >= lo[m] && cfg.center[m] + cfg.radius <= hi[m],
            "sphere_init: sphere leaves the grid bounds");

  std::vector<int> blocks = {g.block};
  for (int b : model.geo_def.w_blocks) blocks.push_back(b);
  for (int b : model.geo_def.b_blocks) blocks.push_back(b);
  std::vector<AdamState<Real>> states(std::size_t(model.store.count()));
  AdamHyper hy;
  hy.lr = cfg.lr;

  Tape<Real> tp(&model.store);
  std::vector<Real> xyz(std::size_t(3 * cfg.batch)), target(std::size_t(cfg.batch));
  std::vector<Real> lw(std::size_t(cfg.batch));
  SphereInitReport rep;
  for (int step = 0; step < cfg.max_steps; ++step) {
    for (int i = 0; i < cfg.batch; ++i) {
      Vec3<Real> p;
      if (i % 3 == 0) {
        // interior/near-surface draws; a uniform box batch alone starves the
        // small ball around the center and its apex never fits
        Real r = cfg.radius * Real(1.3) * Real(std::cbrt(rng.uniform()));
        Vec3<Real> d(Real(rng.normal()), Real(rng.normal()), Real(rng.normal()));
        Real n = d.norm();
        p = cfg.center + (n > Real(0) ? Vec3<Real>(d / n * r) : Vec3<Real>(r, 0, 0));
        for (int m = 0; m < 3; ++m) p[m] = std::min(hi[m], std::max(lo[m], p[m]));
      } else {
        for (int m = 0; m < 3; ++m) p[m] = Real(rng.uniform(double(lo[m]), double(hi[m])));
      }
      for (int m = 0; m < 3; ++m) xyz[std::size_t(3 * i + m)] = p[m];
      target[std::size_t(i)] = (p - cfg.center).norm() - cfg.radius;
      // extra weight toward the apex, where the residual density is tiny
      Real rr = (p - cfg.center).norm() / cfg.radius;
      lw[std::size_t(i)] = Real(1) + Real(15) * std::exp(-Real(4) * rr * rr);
    }
    tp.clear();
    BatchVar phi = model.build_phi_canonical_graph(tp, xyz.data(), std::uint32_t(cfg.batch));
    BatchVar tgt = tp.leaf(target.data(), std::uint32_t(cfg.batch));
    BatchVar diff = tp.ew2(OpK::Sub, phi, tgt);
    BatchVar wdiff = tp.ew2(OpK::Mul, tp.ew1(OpK::Square, diff),
                            tp.leaf(lw.data(), std::uint32_t(cfg.batch)));
    BatchVar loss = tp.ew1(OpK::Scale, tp.sum_all(wdiff), 1.0 / double(cfg.batch));

    double mean_abs = 0;
    for (int i = 0; i < cfg.batch; ++i)
      mean_abs += std::abs(double(tp.value(diff.start + std::uint32_t(i))));
    mean_abs /= cfg.batch;
    rep.mean_abs_residual = mean_abs;
    rep.steps = step;
    if (mean_abs < cfg.tol_frac * double(cfg.radius)) {
      rep.reached = true;
      break;
    }

    GradSink<Real> sink(&model.store);
    tp.backward(loss.start, &sink);
    auto grads = make_zero_gradient(model.store);
    sink.merge_into(grads);
    for (int b : blocks)
      adam_step(model.store.block(b).v.data(), grads[std::size_t(b)].data(),
                model.store.block(b).v.size(), states[std::size_t(b)], hy);
  }
  return rep;
}

}  // namespace warpsdf
