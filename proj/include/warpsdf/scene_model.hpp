#pragma once

#include <array>
#include <string>
#include <vector>

#include "warpsdf/common.hpp"
#include "warpsdf/dual3.hpp"
#include "warpsdf/feature_grid.hpp"
#include "warpsdf/mlp.hpp"
#include "warpsdf/posenc.hpp"
#include "warpsdf/quaternion.hpp"
#include "warpsdf/rng.hpp"
#include "warpsdf/tape.hpp"
#include "warpsdf/tape_math.hpp"

namespace warpsdf {

enum class DeformVariant { Se3Field, PureMlp, BijectiveMap };

inline DeformVariant deform_variant_from(const std::string& s) {
  if (s == "se3") return DeformVariant::Se3Field;
  if (s == "mlp") return DeformVariant::PureMlp;
  if (s == "bijective") return DeformVariant::BijectiveMap;
  fail("unknown deformation variant: ", s);
}

struct ModelConfig {
  // canonical domain (grid extent)
  Vec3d box_lo = {-0.55, -0.55, -0.55};
  Vec3d box_hi = {0.55, 0.55, 0.55};
  int grid_res = 35;
  int grid_max_res = 140;
  bool two_grids = false;

  static constexpr int kChannels = 32;
  static constexpr int kGeoCh = 26;
  static constexpr int kColCh = 6;

  int n_frames = 1;
  int ambient_dim = 2;
  int z_dim = 64;
  int a_dim = 32;
  double code_sigma = 0.01;

  int pe_bands = 6;
  int deform_hidden = 128;
  int deform_depth = 6;
  int deform_skip = 4;
  int decoder_hidden = 64;
  int decoder_depth = 2;
  bool color_gets_ambient = false;
  DeformVariant deform_variant = DeformVariant::Se3Field;

  double lambda_init = -1.0;  // <= 0: 1 / (2 * initial cell size)

  int color_feat_dim() const {
    return kColCh + 3 + 3 + (color_gets_ambient ? ambient_dim : 0);
  }
};

template <class Real>
struct HyperPoint {
  Vec3<Real> x_canon = Vec3<Real>::Zero();
  VecX<Real> w;  // ambient coordinates (may be empty)
};

// Scratch buffers for the scalar evaluation paths.
template <class S>
struct EvalCtx {
  MlpScratch<S> mlp;
  std::vector<S> buf;
};

// Handles into a tape graph of the composite SDF for a batch of observed
// points (one frame). Row groups: values then three tangent groups.
struct PhiGraph {
  std::uint32_t M = 0;
  bool tangents = false;
  BatchVar pe;            // encoded input region
  BatchVar deform_out;    // [rows x 9]
  BatchVar xp[3];         // canonical coordinate value lanes
  BatchVar xp_t[3][3];    // tangent lanes [coord][seed]
  BatchVar w;             // topo output region (n = 0 when ambient_dim == 0)
  BatchVar phi;           // [rows x 1]
  std::uint32_t oob_off = 0;
  BatchVar zcode;         // deformation code nodes
};

// The canonical scene: feature grid + decoders + per-frame deformation and
// topology networks + per-frame codes + the rendering sharpness parameter.
template <class Real>
class SceneModel {
 public:
  ModelConfig cfg;
  ParamStore<Real> store;
  GridGeom<Real> grid;       // main block (geometry channels [0, 26), color [26, 32))
  GridGeom<Real> grid_col;   // same block or a dedicated 6-channel block
  MlpDef deform_def, topo_def, geo_def, col_def;
  int z_block = -1, a_block = -1, loglam_block = -1;
  PosEncConfig pe;

  void init(Rng& rng) {
    require(cfg.deform_variant == DeformVariant::Se3Field,
            "deformation variant not implemented (extension point): only the SE(3) "
            "field is built");
    require(cfg.ambient_dim >= 0 && cfg.ambient_dim <= 8, "ambient_dim must be in [0, 8]");
    pe.bands = cfg.pe_bands;
    pe.window_alpha = double(cfg.pe_bands);

    const int N = cfg.grid_res, C = ModelConfig::kChannels;
    grid.block = store.add("grid", {N, N, N, C}, true, C);
    grid.res = N;
    grid.channels = C;
    for (int m = 0; m < 3; ++m) grid.origin[m] = Real(cfg.box_lo[m]);
    grid.spacing = Real((cfg.box_hi[0] - cfg.box_lo[0]) / double(N - 1));
    for (auto& v : store.block(grid.block).v) v = Real(rng.normal() * 0.01);

    if (cfg.two_grids) {
      grid_col = grid;
      grid_col.block = store.add("grid_color", {N, N, N, ModelConfig::kColCh}, true,
                                 ModelConfig::kColCh);
      grid_col.channels = ModelConfig::kColCh;
      for (auto& v : store.block(grid_col.block).v) v = Real(rng.normal() * 0.01);
    } else {
      grid_col = grid;
    }

    deform_def = mlp_register(store, "deform", pe.dim(), cfg.z_dim, cfg.deform_hidden,
                              cfg.deform_depth, 9, cfg.deform_skip);
    mlp_init(store, deform_def, rng, /*zero_final=*/true);
    if (cfg.ambient_dim > 0) {
      topo_def = mlp_register(store, "topo", pe.dim(), cfg.z_dim, cfg.deform_hidden,
                              cfg.deform_depth, cfg.ambient_dim, cfg.deform_skip);
      mlp_init(store, topo_def, rng, /*zero_final=*/true);
    }
    geo_def = mlp_register(store, "geo", ModelConfig::kGeoCh + cfg.ambient_dim, 0,
                           cfg.decoder_hidden, cfg.decoder_depth, 1, -1);
    mlp_init(store, geo_def, rng, /*zero_final=*/false, 0.5);
    col_def = mlp_register(store, "color", cfg.color_feat_dim(), cfg.a_dim,
                           cfg.decoder_hidden, cfg.decoder_depth, 3, -1);
    mlp_init(store, col_def, rng, /*zero_final=*/false, 1.0);

    z_block = store.add("codes.z", {cfg.n_frames, cfg.z_dim});
    a_block = store.add("codes.appearance", {cfg.n_frames, cfg.a_dim});
    for (auto& v : store.block(z_block).v) v = Real(rng.normal() * cfg.code_sigma);
    for (auto& v : store.block(a_block).v) v = Real(rng.normal() * cfg.code_sigma);

    loglam_block = store.add("lambda.log", {1});
    double lam0 = cfg.lambda_init > 0 ? cfg.lambda_init : 1.0 / (2.0 * double(grid.spacing));
    store.block(loglam_block).v[0] = Real(std::log(lam0));
  }

  Real lambda_value() const { return std::exp(store.block(loglam_block).v[0]); }

  const Real* z_code(int t) const { return store.block(z_block).v.data() + std::size_t(t) * cfg.z_dim; }
  const Real* a_code(int t) const { return store.block(a_block).v.data() + std::size_t(t) * cfg.a_dim; }

  // ---- scalar paths (S = Real or Dual3<Real>) -------------------------------

  // Deformation network output at x for frame t.
  template <class S>
  SE3ParamsT<S> deform_net_forward(const SVec3<S>& x, int t, EvalCtx<S>& ctx) const {
    S out[9];
    eval_net(deform_def, x, t, /*code=*/z_code(t), cfg.z_dim, out, ctx);
    return SE3ParamsT<S>{{out[0], out[1], out[2]},
                         {out[3], out[4], out[5]},
                         {out[6], out[7], out[8]}};
  }

  template <class S>
  void topo_net_forward(const SVec3<S>& x, int t, S* w, EvalCtx<S>& ctx) const {
    if (cfg.ambient_dim == 0) return;
    eval_net(topo_def, x, t, z_code(t), cfg.z_dim, w, ctx);
  }

  template <class S>
  SVec3<S> warp(const SVec3<S>& x, int t, EvalCtx<S>& ctx) const {
    return se3_apply(deform_net_forward(x, t, ctx), x);
  }

  // Canonical hyper-point [x', w] (Eq. 3 composition).
  template <class S>
  void map_to_canonical(const SVec3<S>& x, int t, SVec3<S>& xc, S* w, EvalCtx<S>& ctx) const {
    xc = warp(x, t, ctx);
    topo_net_forward(x, t, w, ctx);
  }

  // SDF at a canonical hyper-point.
  template <class S>
  S sdf_query(const SVec3<S>& xc, const S* w, EvalCtx<S>& ctx, bool* oob = nullptr) const {
    S feats[ModelConfig::kGeoCh + 8];
    grid_trilerp(store, grid, 0, ModelConfig::kGeoCh, xc, feats, oob);
    for (int j = 0; j < cfg.ambient_dim; ++j) feats[ModelConfig::kGeoCh + j] = w[j];
    S phi;
    mlp_eval(store, geo_def, feats, &phi, ctx.mlp);
    return phi;
  }

  // Composite observation-space SDF.
  template <class S>
  S phi_obs(const SVec3<S>& x, int t, EvalCtx<S>& ctx, bool* oob = nullptr) const {
    SVec3<S> xc;
    S w[8];
    map_to_canonical(x, t, xc, w, ctx);
    return sdf_query(xc, w, ctx, oob);
  }

  HyperPoint<Real> map_to_canonical_point(const Vec3<Real>& x, int t) const {
    EvalCtx<Real> ctx;
    SVec3<Real> xc;
    Real w[8];
    map_to_canonical<Real>({x[0], x[1], x[2]}, t, xc, w, ctx);
    HyperPoint<Real> p;
    p.x_canon = {xc[0], xc[1], xc[2]};
    p.w.resize(cfg.ambient_dim);
    for (int j = 0; j < cfg.ambient_dim; ++j) p.w[j] = w[j];
    return p;
  }

  // Gradient of the composite SDF w.r.t. the observed point.
  Vec3<Real> canonical_normal(const Vec3<Real>& x, int t) const {
    EvalCtx<Dual3<Real>> ctx;
    using D = Dual3<Real>;
    SVec3<D> xd = {D::seed(x[0], 0), D::seed(x[1], 1), D::seed(x[2], 2)};
    D phi = phi_obs(xd, t, ctx);
    return phi.t;
  }

  // J = d x' / d x of the deformation at x.
  Mat3<Real> deform_jacobian(const Vec3<Real>& x, int t) const {
    EvalCtx<Dual3<Real>> ctx;
    using D = Dual3<Real>;
    SVec3<D> xd = {D::seed(x[0], 0), D::seed(x[1], 1), D::seed(x[2], 2)};
    SVec3<D> xc = warp(xd, t, ctx);
    Mat3<Real> J;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) J(i, j) = xc[std::size_t(i)].t[j];
    return J;
  }

  // Color at a canonical point given view direction, normal and frame.
  Vec3<Real> color_query(const Vec3<Real>& xc, const Vec3<Real>& d_c, const Vec3<Real>& n,
                         const Real* w, int t, EvalCtx<Real>& ctx) const {
    ctx.buf.resize(std::size_t(col_def.in_dim()));
    Real* in = ctx.buf.data();
    SVec3<Real> xcs = {xc[0], xc[1], xc[2]};
    grid_trilerp(store, grid_col, color_c_begin(), ModelConfig::kColCh, xcs, in);
    int o = ModelConfig::kColCh;
    for (int j = 0; j < 3; ++j) in[o + j] = d_c[j];
    o += 3;
    for (int j = 0; j < 3; ++j) in[o + j] = n[j];
    o += 3;
    if (cfg.color_gets_ambient)
      for (int j = 0; j < cfg.ambient_dim; ++j) in[o + j] = w ? w[j] : Real(0);
    o = col_def.feat_dim;
    const Real* ac = a_code(t);
    for (int j = 0; j < cfg.a_dim; ++j) in[o + j] = ac[j];
    Real raw[3];
    mlp_eval(store, col_def, in, raw, ctx.mlp);
    return {sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2])};
  }

  int color_c_begin() const { return cfg.two_grids ? 0 : ModelConfig::kGeoCh; }

  // ---- tape graph builders ---------------------------------------------------

  // Composite SDF graph for M observed points of one frame. xyz is M
  // interleaved triples. eikonal_canonical reseeds the spatial tangents at the
  // canonical point (Eq. 12's variable) instead of the observed point.
  PhiGraph build_phi_graph(Tape<Real>& tp, const Real* xyz, std::uint32_t M, int t,
                           bool tangents, bool eikonal_canonical = false) const {
    PhiGraph g;
    g.M = M;
    g.tangents = tangents;
    std::vector<Real> win(std::size_t(pe.bands));
    posenc_windows(pe, win.data());
    g.pe = tp.posenc(xyz, M, pe.bands, win.data(), tangents);
    const int E = pe.dim();

    g.zcode = tp.param_vec(z_block, std::uint32_t(t) * std::uint32_t(cfg.z_dim),
                           std::uint32_t(cfg.z_dim));
    g.deform_out = mlp_tape(tp, deform_def, g.pe.start, M, tangents, g.zcode);

    // input point lanes come straight off the encoding's identity prefix
    TanVec3<Real> x, r, a, d;
    for (int m = 0; m < 3; ++m) {
      x.c[m] = make_tb(tp, {g.pe.start + std::uint32_t(m), M, E},
                       g.pe.start, M, E, m, tangents);
      r.c[m] = make_tb(tp, {g.deform_out.start + std::uint32_t(m), M, 9},
                       g.deform_out.start, M, 9, m, tangents);
      a.c[m] = make_tb(tp, {g.deform_out.start + std::uint32_t(3 + m), M, 9},
                       g.deform_out.start, M, 9, 3 + m, tangents);
      d.c[m] = make_tb(tp, {g.deform_out.start + std::uint32_t(6 + m), M, 9},
                       g.deform_out.start, M, 9, 6 + m, tangents);
    }
    TanQuat<Real> q = tq_exp(r);
    TanVec3<Real> xp = tv_add(tv_add(tq_rotate(q, tv_sub(x, a)), a), d);

    for (int m = 0; m < 3; ++m) {
      g.xp[m] = xp.c[m].v;
      for (int k = 0; k < 3; ++k) g.xp_t[m][k] = tangents ? xp.c[m].t[k] : BatchVar{};
    }

    if (cfg.ambient_dim > 0)
      g.w = mlp_tape(tp, topo_def, g.pe.start, M, tangents, g.zcode);

    // trilerp + geometry decoder input [rows x (26 + m)]
    BatchVar xt_lanes[9];
    const BatchVar* xt = nullptr;
    BatchVar zero = tp.leaf_scalar(Real(0));
    BatchVar one = tp.leaf_scalar(Real(1));
    if (tangents) {
      for (int m = 0; m < 3; ++m)
        for (int k = 0; k < 3; ++k)
          xt_lanes[3 * m + k] =
              eikonal_canonical ? (m == k ? one : zero) : g.xp_t[m][k];
      xt = xt_lanes;
    }
    BatchVar coords[3] = {g.xp[0], g.xp[1], g.xp[2]};
    BatchVar gfeat = tp.trilerp(grid, 0, ModelConfig::kGeoCh, coords, xt, g.oob_off);

    std::uint32_t rows = (tangents ? 4 : 1) * M;
    int gin_w = ModelConfig::kGeoCh + cfg.ambient_dim;
    std::uint32_t gin = tp.alloc(rows * std::uint32_t(gin_w));
    tp.copy2d_into(gfeat.start, rows, ModelConfig::kGeoCh, ModelConfig::kGeoCh, gin,
                   std::uint32_t(gin_w));
    if (cfg.ambient_dim > 0) {
      if (tangents && eikonal_canonical) {
        // canonical seeds: ambient tangents are zero
        tp.copy2d_into(g.w.start, M, std::uint32_t(cfg.ambient_dim),
                       std::uint32_t(cfg.ambient_dim), gin + ModelConfig::kGeoCh,
                       std::uint32_t(gin_w));
        for (int k = 0; k < 3; ++k)
          for (int j = 0; j < cfg.ambient_dim; ++j)
            tp.copy_into({zero.start, M, 0},
                         gin + (std::uint32_t(k + 1) * M) * std::uint32_t(gin_w) +
                             ModelConfig::kGeoCh + std::uint32_t(j),
                         gin_w);
      } else {
        tp.copy2d_into(g.w.start, rows, std::uint32_t(cfg.ambient_dim),
                       std::uint32_t(cfg.ambient_dim), gin + ModelConfig::kGeoCh,
                       std::uint32_t(gin_w));
      }
    }
    g.phi = mlp_tape(tp, geo_def, gin, M, tangents, {});
    return g;
  }

  BatchVar phi_values(const PhiGraph& g) const { return {g.phi.start, g.M, 1}; }
  BatchVar phi_grad_lane(const PhiGraph& g, int k) const {
    return {g.phi.start + std::uint32_t(k + 1) * g.M, g.M, 1};
  }

  // Color graph for the same batch: canonical view dirs via J, normals from
  // the phi tangent lanes, appearance code bracket. dirs is M interleaved
  // world-space unit directions (constants). Returns [M x 3] rgb in (0,1).
  BatchVar build_color_graph(Tape<Real>& tp, const PhiGraph& g, const Real* dirs,
                             int t) const {
    require(g.tangents, "build_color_graph: needs tangent lanes for J and normals");
    const std::uint32_t M = g.M;
    // d_c[m] = sum_k (d xp_m / d x_k) * dir_k
    BatchVar dirlane[3];
    for (int k = 0; k < 3; ++k) dirlane[k] = tp.leaf(dirs + k, M, 3);
    BatchVar dc[3];
    for (int m = 0; m < 3; ++m) {
      BatchVar acc = tp.ew2(OpK::Mul, g.xp_t[m][0], dirlane[0]);
      for (int k = 1; k < 3; ++k) {
        BatchVar term = tp.ew2(OpK::Mul, g.xp_t[m][k], dirlane[k]);
        acc = tp.ew2(OpK::Add, acc, term);
      }
      dc[m] = acc;
    }
    std::uint32_t dummy_oob = 0;
    BatchVar coords[3] = {g.xp[0], g.xp[1], g.xp[2]};
    BatchVar cfeat = tp.trilerp(grid_col, color_c_begin(), ModelConfig::kColCh, coords,
                                nullptr, dummy_oob);
    const int fw = col_def.feat_dim;
    std::uint32_t cin = tp.alloc(M * std::uint32_t(fw));
    tp.copy2d_into(cfeat.start, M, ModelConfig::kColCh, ModelConfig::kColCh, cin,
                   std::uint32_t(fw));
    for (int m = 0; m < 3; ++m)
      tp.copy_into(dc[m], cin + ModelConfig::kColCh + std::uint32_t(m), fw);
    for (int k = 0; k < 3; ++k)
      tp.copy_into(phi_grad_lane(g, k), cin + ModelConfig::kColCh + 3 + std::uint32_t(k),
                   fw);
    if (cfg.color_gets_ambient)
      for (int j = 0; j < cfg.ambient_dim; ++j)
        tp.copy_into({g.w.start + std::uint32_t(j), M, std::int32_t(cfg.ambient_dim)},
                     cin + ModelConfig::kColCh + 6 + std::uint32_t(j), fw);
    BatchVar acode = tp.param_vec(a_block, std::uint32_t(t) * std::uint32_t(cfg.a_dim),
                                  std::uint32_t(cfg.a_dim));
    BatchVar raw = mlp_tape(tp, col_def, cin, M, false, acode);
    return tp.ew1(OpK::Sigmoid, raw);
  }

  // SDF graph over canonical points directly (no deformation, ambient = 0);
  // the sphere-init regression and grid-space probes use this.
  BatchVar build_phi_canonical_graph(Tape<Real>& tp, const Real* xyz,
                                     std::uint32_t M) const {
    BatchVar x[3];
    for (int m = 0; m < 3; ++m) x[m] = tp.leaf(xyz + m, M, 3);
    std::uint32_t oob = 0;
    BatchVar gfeat = tp.trilerp(grid, 0, ModelConfig::kGeoCh, x, nullptr, oob);
    int gin_w = ModelConfig::kGeoCh + cfg.ambient_dim;
    std::uint32_t gin = tp.alloc(M * std::uint32_t(gin_w));
    tp.copy2d_into(gfeat.start, M, ModelConfig::kGeoCh, ModelConfig::kGeoCh, gin,
                   std::uint32_t(gin_w));
    if (cfg.ambient_dim > 0) {
      BatchVar zero = tp.leaf_scalar(Real(0));
      for (int j = 0; j < cfg.ambient_dim; ++j)
        tp.copy_into({zero.start, M, 0}, gin + ModelConfig::kGeoCh + std::uint32_t(j),
                     gin_w);
    }
    return mlp_tape(tp, geo_def, gin, M, false, {});
  }

 private:
  static TanBatch<Real> make_tb(Tape<Real>& tp, BatchVar v, std::uint32_t region_start,
                                std::uint32_t M, int width, int col, bool tangents) {
    TanBatch<Real> tb;
    tb.tape = &tp;
    tb.v = v;
    tb.has_t = tangents;
    if (tangents)
      for (int k = 0; k < 3; ++k)
        tb.t[k] = {region_start + std::uint32_t(k + 1) * M * std::uint32_t(width) +
                       std::uint32_t(col),
                   M, width};
    return tb;
  }

  template <class S>
  void eval_net(const MlpDef& def, const SVec3<S>& x, int t, const Real* code,
                int code_dim, S* out, EvalCtx<S>& ctx) const {
    ctx.buf.resize(std::size_t(def.in_dim()));
    posenc_eval<S, Real>(x, pe, ctx.buf.data());
    for (int j = 0; j < code_dim; ++j) ctx.buf[std::size_t(def.feat_dim + j)] = S(code[j]);
    mlp_eval(store, def, ctx.buf.data(), out, ctx.mlp);
  }
};

}  // namespace warpsdf
