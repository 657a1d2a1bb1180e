#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "warpsdf/camera.hpp"
#include "warpsdf/losses.hpp"
#include "warpsdf/rng.hpp"
#include "warpsdf/sampling.hpp"
#include "warpsdf/scene_model.hpp"
#include "warpsdf/volume.hpp"

namespace warpsdf {

template <class Real>
struct RenderOptions {
  int n_uniform = 64;
  int imp_rounds = 4;
  int imp_per_round = 16;
  double imp_floor = 0.01;
  double near_far_pad = 0.05;
  bool extrapolate_last = false;

  int samples_per_ray() const { return n_uniform + imp_rounds * imp_per_round; }
};

// Clips the ray against the scene box (5% padded by default). Returns false
// for rays that miss; such rays are skipped by samplers.
template <class Real>
bool ray_box_near_far(const Aabb<Real>& box, Ray<Real>& ray, Real pad_frac) {
  Real t0 = 0, t1 = 0;
  if (!box.intersect(ray.origin, ray.dir, Real(1e-4), Real(1e9), t0, t1)) return false;
  if (t1 <= t0) return false;
  Real pad = (t1 - t0) * pad_frac;
  ray.near = std::max(Real(1e-4), t0 - pad);
  ray.far = t1 + pad;
  return ray.near < ray.far;
}

// Sample depths for one ray: stratified base plus iterative importance
// refinement driven by the scalar SDF path.
template <class Real, class RngT>
std::vector<Real> sample_ray_depths(const SceneModel<Real>& model, const Ray<Real>& ray,
                                    int frame, const RenderOptions<Real>& opt,
                                    RngT& rng) {
  std::vector<Real> d = stratified_sample(ray.near, ray.far, opt.n_uniform, rng);
  if (opt.imp_rounds > 0 && opt.imp_per_round > 0) {
    EvalCtx<Real> ctx;
    Real lam = model.lambda_value();
    auto phi_at = [&](Real t) {
      Vec3<Real> p = ray.point_at(t);
      return model.template phi_obs<Real>({p[0], p[1], p[2]}, frame, ctx);
    };
    d = importance_sample(std::move(d), phi_at, lam, opt.imp_per_round, opt.imp_rounds,
                          Real(opt.imp_floor), rng, ray.near, ray.far);
  }
  return d;
}

// Full single-ray pipeline on the scalar path (inference, debugging, tests):
// sample -> warp -> SDF -> weights -> color -> composite.
template <class Real, class RngT>
RayRender<Real> render_ray(const SceneModel<Real>& model, const Ray<Real>& ray,
                           int frame, const RenderOptions<Real>& opt, RngT& rng,
                           RaySampleSet<Real>* out_samples = nullptr) {
  std::vector<Real> depths = sample_ray_depths(model, ray, frame, opt, rng);
  const std::size_t n = depths.size();
  RaySampleSet<Real> local;
  RaySampleSet<Real>& s = out_samples ? *out_samples : local;
  s = RaySampleSet<Real>{};
  s.depth = std::move(depths);
  s.ambient_dim = model.cfg.ambient_dim;
  s.x_obs.resize(n);
  s.x_canon.resize(n);
  s.ambient.resize(n * std::size_t(model.cfg.ambient_dim));
  s.phi.resize(n);
  s.color.resize(n);
  s.oob.resize(n);

  using D = Dual3<Real>;
  EvalCtx<D> dctx;
  EvalCtx<Real> ctx;
  std::vector<Vec3<Real>> normals(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3<Real> p = ray.point_at(s.depth[i]);
    s.x_obs[i] = p;
    SVec3<D> xd = {D::seed(p[0], 0), D::seed(p[1], 1), D::seed(p[2], 2)};
    SVec3<D> xc;
    D w[8];
    model.map_to_canonical(xd, frame, xc, w, dctx);
    s.x_canon[i] = {xc[0].v, xc[1].v, xc[2].v};
    for (int j = 0; j < model.cfg.ambient_dim; ++j)
      s.ambient[i * std::size_t(model.cfg.ambient_dim) + std::size_t(j)] = w[j].v;
    bool oob = false;
    D phi = model.sdf_query(xc, w, dctx, &oob);
    s.phi[i] = phi.v;
    s.oob[i] = oob ? 1 : 0;
    normals[i] = phi.t;
  }
  fill_weights(s, model.lambda_value(), opt.extrapolate_last);
  for (std::size_t i = 0; i < n; ++i) {
    // canonical view direction through the warp Jacobian
    Mat3<Real> J;
    {
      SVec3<D> xd = {D::seed(s.x_obs[i][0], 0), D::seed(s.x_obs[i][1], 1),
                     D::seed(s.x_obs[i][2], 2)};
      SVec3<D> xc = model.warp(xd, frame, dctx);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) J(r, c) = xc[std::size_t(r)].t[c];
    }
    Vec3<Real> d_c = J * ray.dir;
    const Real* amb = s.ambient.empty()
                          ? nullptr
                          : &s.ambient[i * std::size_t(model.cfg.ambient_dim)];
    s.color[i] = model.color_query(s.x_canon[i], d_c, normals[i], amb, frame, ctx);
  }
  return composite_ray(s);
}

// ---- batched training chunks --------------------------------------------------

template <class Real>
struct TrainRay {
  Ray<Real> ray;
  Vec3<Real> rgb_gt = Vec3<Real>::Zero();
  Real depth_gt = 0;  // 0 = invalid
  Real mask_gt = 0;
  std::vector<Real> depths;      // samples_per_ray ascending depths
  Vec3<Real> smooth_delta = Vec3<Real>::Zero();
};

struct BatchNormalizers {
  int n_rgb = 0;   // all rays in the batch
  int n_depth = 0; // rays with valid depth
  int n_rays = 0;  // smoothness normalizer
};

template <class Real>
struct ChunkResult {
  std::uint32_t total_node = 0;
  std::array<double, 7> term_sums{};  // raw sums before batch normalizers
};

// Builds the differentiable render + loss graph for a chunk of rays of one
// frame and returns the chunk's weighted contribution to the batch loss
// (already scaled by effective weights and batch normalizers, so backward can
// be seeded with 1 independently per chunk).
template <class Real>
ChunkResult<Real> build_chunk_graph(Tape<Real>& tp, const SceneModel<Real>& model,
                                    const std::vector<TrainRay<Real>>& rays, int frame,
                                    const LossConfig& cfg,
                                    const std::array<double, 7>& eff_w,
                                    const BatchNormalizers& norm, Real eps_trunc,
                                    const RenderOptions<Real>& opt) {
  const int R = int(rays.size());
  const int spr = int(rays[0].depths.size());
  const std::uint32_t M = std::uint32_t(R * spr);

  // host-side constant sample arrays
  std::vector<Real> xyz(3 * M), dirs(3 * M), depth_c(M), bound_c(M, Real(0));
  std::vector<Real> w_tr(M, Real(0)), w_fs(M, Real(0));
  std::vector<Real> cgt(3 * std::size_t(R)), dgt(static_cast<std::size_t>(R)),
      mgt(static_cast<std::size_t>(R));
  std::vector<Real> w_ray_rgb(static_cast<std::size_t>(R)),
      w_ray_d(static_cast<std::size_t>(R));
  std::vector<int> s_tr, s_fs;
  for (int r = 0; r < R; ++r) {
    const TrainRay<Real>& tr = rays[r];
    for (int i = 0; i < spr; ++i) {
      std::size_t k = std::size_t(r * spr + i);
      Vec3<Real> p = tr.ray.point_at(tr.depths[std::size_t(i)]);
      for (int m = 0; m < 3; ++m) {
        xyz[3 * k + std::size_t(m)] = p[m];
        dirs[3 * k + std::size_t(m)] = tr.ray.dir[m];
      }
      depth_c[k] = tr.depths[std::size_t(i)];
    }
    for (int m = 0; m < 3; ++m) cgt[std::size_t(3 * r + m)] = tr.rgb_gt[m];
    dgt[std::size_t(r)] = tr.depth_gt;
    mgt[std::size_t(r)] = tr.mask_gt;
    bool valid = tr.depth_gt > Real(0);
    w_ray_rgb[std::size_t(r)] = tr.mask_gt;
    w_ray_d[std::size_t(r)] = valid ? tr.mask_gt : Real(0);
    if (valid) {
      partition_samples(tr.depth_gt, tr.depths, eps_trunc, s_tr, s_fs);
      for (int i = 0; i < spr; ++i)
        bound_c[std::size_t(r * spr + i)] = tr.depth_gt - tr.depths[std::size_t(i)];
      for (int i : s_tr) w_tr[std::size_t(r * spr + i)] = Real(1) / Real(s_tr.size());
      for (int i : s_fs) w_fs[std::size_t(r * spr + i)] = Real(1) / Real(s_fs.size());
    }
  }

  PhiGraph g = model.build_phi_graph(tp, xyz.data(), M, frame, /*tangents=*/true,
                                     cfg.eikonal_canonical);
  BatchVar phi = {g.phi.start, M, 1};

  // Eikonal weights need the out-of-bounds flags of the forward pass.
  std::vector<Real> w_eik(M, Real(0));
  {
    const std::uint8_t* oob = tp.bytes(g.oob_off);
    for (int r = 0; r < R; ++r) {
      if (!(rays[std::size_t(r)].depth_gt > Real(0))) continue;
      int cnt = 0;
      for (int i = 0; i < spr; ++i) {
        std::size_t k = std::size_t(r * spr + i);
        if (w_fs[k] > Real(0) && !oob[k]) ++cnt;
      }
      if (cnt == 0) continue;
      for (int i = 0; i < spr; ++i) {
        std::size_t k = std::size_t(r * spr + i);
        if (w_fs[k] > Real(0) && !oob[k]) w_eik[k] = Real(1) / Real(cnt);
      }
    }
  }

  // lambda-sharpened opacities; the last sample of each ray pairs with a
  // virtual next sample (alpha = 0) unless back-extrapolation is enabled
  std::uint32_t phi_next = tp.alloc(M);
  for (int r = 0; r < R; ++r) {
    std::uint32_t base = phi.start + std::uint32_t(r * spr);
    tp.copy_into({base + 1, std::uint32_t(spr - 1), 1}, phi_next + std::uint32_t(r * spr), 1);
    std::uint32_t last = phi_next + std::uint32_t(r * spr + spr - 1);
    if (opt.extrapolate_last && spr >= 2) {
      BatchVar two_last = tp.ew1(OpK::Scale, {base + std::uint32_t(spr - 1), 1, 1}, 2.0);
      tp.ew2_into(OpK::Sub, two_last, {base + std::uint32_t(spr - 2), 1, 1}, last, 1);
    } else {
      tp.copy_into({base + std::uint32_t(spr - 1), 1, 1}, last, 1);
    }
  }
  BatchVar lam = tp.ew1(OpK::Exp, tp.param_vec(model.loglam_block, 0, 1));
  BatchVar lam_b = {lam.start, 1, 0};
  BatchVar sig_i = tp.ew1(OpK::Sigmoid, tp.ew2(OpK::Mul, phi, lam_b));
  BatchVar sig_n = tp.ew1(OpK::Sigmoid, tp.ew2(OpK::Mul, {phi_next, M, 1}, lam_b));
  BatchVar num = tp.ew2(OpK::Sub, sig_i, sig_n);
  BatchVar den = tp.ew1(OpK::MaxC, sig_i, 1e-12);
  BatchVar alpha = tp.ew1(OpK::MaxC, tp.ew2(OpK::Div, num, den), 0.0);
  BatchVar T = tp.transmit(alpha, std::uint32_t(spr));
  BatchVar w = tp.ew2(OpK::Mul, T, alpha);
  BatchVar m_hat = tp.segsum(w, std::uint32_t(spr));

  BatchVar colors = model.build_color_graph(tp, g, dirs.data(), frame);

  BatchVar depth_leaf = tp.leaf(depth_c.data(), M);
  BatchVar d_hat = tp.segsum(tp.ew2(OpK::Mul, w, depth_leaf), std::uint32_t(spr));

  // rgb: ||c - c_hat|| per ray, masked
  BatchVar sum_sq{};
  for (int ch = 0; ch < 3; ++ch) {
    BatchVar c_hat = tp.segsum(
        tp.ew2(OpK::Mul, w, {colors.start + std::uint32_t(ch), M, 3}), std::uint32_t(spr));
    BatchVar cg = tp.leaf(cgt.data() + ch, std::uint32_t(R), 3);
    BatchVar sq = tp.ew1(OpK::Square, tp.ew2(OpK::Sub, c_hat, cg));
    sum_sq = ch == 0 ? sq : tp.ew2(OpK::Add, sum_sq, sq);
  }
  BatchVar l_rgb = tp.ew1(OpK::SqrtG, sum_sq, 1e-24);
  BatchVar term_rgb =
      tp.sum_all(tp.ew2(OpK::Mul, l_rgb, tp.leaf(w_ray_rgb.data(), std::uint32_t(R))));

  // depth: |d_r - d_hat| over valid rays, masked
  BatchVar dg = tp.leaf(dgt.data(), std::uint32_t(R));
  BatchVar l_d = tp.ew1(OpK::Abs, tp.ew2(OpK::Sub, dg, d_hat));
  BatchVar term_d =
      tp.sum_all(tp.ew2(OpK::Mul, l_d, tp.leaf(w_ray_d.data(), std::uint32_t(R))));

  // sdf: |phi - b| over the truncation sets
  BatchVar bound_leaf = tp.leaf(bound_c.data(), M);
  BatchVar l_sdf = tp.ew1(OpK::Abs, tp.ew2(OpK::Sub, phi, bound_leaf));
  BatchVar term_sdf = tp.sum_all(tp.ew2(OpK::Mul, l_sdf, tp.leaf(w_tr.data(), M)));

  // free space: max(0, e^{-a phi} - 1, phi - b)
  BatchVar e_branch = tp.ew1(OpK::Scale, tp.ew1(OpK::Exp, tp.ew1(OpK::Scale, phi, -cfg.alpha_fs)), 1.0, -1.0);
  BatchVar lin_branch = tp.ew2(OpK::Sub, phi, bound_leaf);
  BatchVar l_fs = tp.ew1(OpK::MaxC, tp.ew2(OpK::Max2, e_branch, lin_branch), 0.0);
  BatchVar term_fs = tp.sum_all(tp.ew2(OpK::Mul, l_fs, tp.leaf(w_fs.data(), M)));

  // eikonal: (1 - ||grad phi||)^2 over in-bounds free-space samples
  BatchVar nsq{};
  for (int k = 0; k < 3; ++k) {
    BatchVar sq = tp.ew1(OpK::Square, model.phi_grad_lane(g, k));
    nsq = k == 0 ? sq : tp.ew2(OpK::Add, nsq, sq);
  }
  BatchVar nlen = tp.ew1(OpK::SqrtG, nsq, 1e-24);
  BatchVar l_eik = tp.ew1(OpK::Square, tp.ew1(OpK::Scale, nlen, -1.0, 1.0));
  BatchVar term_eik = tp.sum_all(tp.ew2(OpK::Mul, l_eik, tp.leaf(w_eik.data(), M)));

  // smoothness: normal difference at back-projected surface points
  BatchVar term_smooth = tp.leaf_scalar(Real(0));
  {
    std::vector<Real> sp;
    std::vector<Real> wvals;
    for (const TrainRay<Real>& tr : rays)
      if (tr.depth_gt > Real(0)) {
        Vec3<Real> xs = tr.ray.point_at(tr.depth_gt);
        for (int m = 0; m < 3; ++m) sp.push_back(xs[m]);
        wvals.push_back(tr.mask_gt);
      }
    std::uint32_t Rv = std::uint32_t(wvals.size());
    if (Rv > 0 && cfg.w_smooth > 0) {
      std::vector<Real> both(6 * Rv);
      std::size_t vi = 0;
      for (const TrainRay<Real>& tr : rays)
        if (tr.depth_gt > Real(0)) {
          for (int m = 0; m < 3; ++m) both[3 * vi + std::size_t(m)] = sp[3 * vi + std::size_t(m)];
          for (int m = 0; m < 3; ++m)
            both[3 * (Rv + vi) + std::size_t(m)] =
                sp[3 * vi + std::size_t(m)] + tr.smooth_delta[m];
          ++vi;
        }
      PhiGraph g2 = model.build_phi_graph(tp, both.data(), 2 * Rv, frame,
                                          /*tangents=*/true, cfg.eikonal_canonical);
      BatchVar acc{};
      for (int k = 0; k < 3; ++k) {
        BatchVar lane = model.phi_grad_lane(g2, k);
        BatchVar na = {lane.start, Rv, 1};
        BatchVar nb = {lane.start + Rv, Rv, 1};
        BatchVar d2 = tp.ew1(OpK::Square, tp.ew2(OpK::Sub, na, nb));
        acc = k == 0 ? d2 : tp.ew2(OpK::Add, acc, d2);
      }
      term_smooth =
          tp.sum_all(tp.ew2(OpK::Mul, acc, tp.leaf(wvals.data(), Rv)));
    }
  }

  // mask: binary cross entropy on accumulated opacity
  BatchVar m_cl = tp.ew1(OpK::Clamp, m_hat, 1e-6, 1.0 - 1e-6);
  BatchVar mg = tp.leaf(mgt.data(), std::uint32_t(R));
  BatchVar log_m = tp.ew1(OpK::Log, m_cl);
  BatchVar log_1m = tp.ew1(OpK::Log, tp.ew1(OpK::Scale, m_cl, -1.0, 1.0));
  BatchVar one_minus_mg = tp.ew1(OpK::Scale, mg, -1.0, 1.0);
  BatchVar bce = tp.ew1(OpK::Neg, tp.ew2(OpK::Add, tp.ew2(OpK::Mul, mg, log_m),
                                         tp.ew2(OpK::Mul, one_minus_mg, log_1m)));
  BatchVar term_mask = tp.sum_all(bce);

  ChunkResult<Real> out;
  const BatchVar terms[7] = {term_rgb, term_d,   term_sdf,  term_fs,
                             term_eik, term_smooth, term_mask};
  const double nrm[7] = {double(norm.n_rgb),  double(norm.n_depth), double(norm.n_depth),
                         double(norm.n_depth), double(norm.n_depth), double(norm.n_rays),
                         double(norm.n_rgb)};
  BatchVar total{};
  bool first = true;
  for (int i = 0; i < 7; ++i) {
    out.term_sums[std::size_t(i)] = double(tp.value(terms[i].start));
    double scale = nrm[i] > 0 ? eff_w[std::size_t(i)] / nrm[i] : 0.0;
    if (scale == 0.0) continue;
    BatchVar contrib = tp.ew1(OpK::Scale, terms[i], scale);
    total = first ? contrib : tp.ew2(OpK::Add, total, contrib);
    first = false;
  }
  if (first) total = tp.leaf_scalar(Real(0));
  out.total_node = total.start;
  return out;
}

}  // namespace warpsdf
