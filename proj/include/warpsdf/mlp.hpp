#pragma once

#include <string>
#include <vector>

#include "warpsdf/params.hpp"
#include "warpsdf/rng.hpp"
#include "warpsdf/scalar_funcs.hpp"
#include "warpsdf/tape.hpp"

namespace warpsdf {

// Fully-connected net with softplus hidden activations and a linear head.
// Input columns are [features | code]; an optional skip layer re-concats the
// full input. One definition drives both the scalar reference evaluation and
// the batched tape forward (same parameter blocks).
struct MlpDef {
  int feat_dim = 0;
  int code_dim = 0;
  int hidden = 64;
  int depth = 2;       // hidden layers
  int out_dim = 1;
  int skip_layer = -1; // hidden layer index (1-based would be odd; 0 disallowed)
  std::vector<int> w_blocks, b_blocks;

  int in_dim() const { return feat_dim + code_dim; }
  int layer_in(int k) const {
    if (k == 0) return in_dim();
    if (k == skip_layer) return hidden + in_dim();
    return hidden;
  }
  int layer_out(int k) const { return k == depth ? out_dim : hidden; }
};

template <class Real>
MlpDef mlp_register(ParamStore<Real>& store, const std::string& prefix, int feat_dim,
                    int code_dim, int hidden, int depth, int out_dim, int skip_layer) {
  require(depth >= 1, "mlp_register: depth must be >= 1");
  require(skip_layer != 0, "mlp_register: skip at layer 0 is meaningless");
  require(skip_layer < depth, "mlp_register: skip layer must precede the head");
  MlpDef def;
  def.feat_dim = feat_dim;
  def.code_dim = code_dim;
  def.hidden = hidden;
  def.depth = depth;
  def.out_dim = out_dim;
  def.skip_layer = skip_layer;
  for (int k = 0; k <= depth; ++k) {
    def.w_blocks.push_back(store.add(prefix + ".l" + std::to_string(k) + ".W",
                                     {def.layer_out(k), def.layer_in(k)}));
    def.b_blocks.push_back(
        store.add(prefix + ".l" + std::to_string(k) + ".b", {def.layer_out(k)}));
  }
  return def;
}

// Xavier-uniform hidden layers; the head is zeroed (identity-at-init fields)
// or scaled Xavier.
template <class Real>
void mlp_init(ParamStore<Real>& store, const MlpDef& def, Rng& rng, bool zero_final,
              double final_scale = 1.0) {
  for (int k = 0; k <= def.depth; ++k) {
    auto& W = store.block(def.w_blocks[std::size_t(k)]).v;
    auto& B = store.block(def.b_blocks[std::size_t(k)]).v;
    std::fill(B.begin(), B.end(), Real(0));
    if (k == def.depth && zero_final) {
      std::fill(W.begin(), W.end(), Real(0));
      continue;
    }
    double lim = std::sqrt(6.0 / double(def.layer_in(k) + def.layer_out(k)));
    if (k == def.depth) lim *= final_scale;
    for (auto& w : W) w = Real(rng.uniform(-lim, lim));
  }
}

template <class S>
struct MlpScratch {
  std::vector<S> a, b;
};

// Scalar-generic forward; S is Real or Dual3<Real>.
template <class S, class Real>
void mlp_eval(const ParamStore<Real>& store, const MlpDef& def, const S* input, S* out,
              MlpScratch<S>& ws) {
  ws.a.resize(std::size_t(def.hidden + def.in_dim()));
  ws.b.resize(std::size_t(def.hidden + def.in_dim()));
  const S* cur = input;
  for (int k = 0; k <= def.depth; ++k) {
    int nin = def.layer_in(k), nout = def.layer_out(k);
    std::vector<S>& dst = (k % 2 == 0) ? ws.a : ws.b;
    if (k == def.skip_layer) {
      // concat [h | input]; h currently occupies cur[0..hidden)
      std::vector<S>& tmp = (k % 2 == 0) ? ws.b : ws.a;  // cur aliases the other one
      for (int i = 0; i < def.hidden; ++i) tmp[std::size_t(i)] = cur[i];
      for (int i = 0; i < def.in_dim(); ++i) tmp[std::size_t(def.hidden + i)] = input[i];
      cur = tmp.data();
    }
    const Real* W = store.block(def.w_blocks[std::size_t(k)]).v.data();
    const Real* B = store.block(def.b_blocks[std::size_t(k)]).v.data();
    S* y = (k == def.depth) ? out : dst.data();
    for (int j = 0; j < nout; ++j) {
      S acc = S(B[j]);
      const Real* wrow = W + std::size_t(j) * nin;
      for (int i = 0; i < nin; ++i) acc = acc + wrow[i] * cur[i];
      y[j] = (k == def.depth) ? acc : softplus_f(acc);
    }
    cur = y;
  }
}

// Batched tape forward. feat is a contiguous [(1 or 4)M x feat_dim] region
// (tangent row groups appended when with_tangents); code is a code_dim node
// range entering through a 1-row bracket so the GEMM width stays feat-sized.
// Returns the [(1 or 4)M x out_dim] output region.
template <class Real>
BatchVar mlp_tape(Tape<Real>& tp, const MlpDef& def, std::uint32_t feat_start,
                  std::uint32_t M, bool with_tangents, BatchVar code) {
  require((def.code_dim == 0) == (code.n == 0), "mlp_tape: code size mismatch");
  std::uint32_t rows = (with_tangents ? 4 : 1) * M;
  std::uint32_t cur = feat_start;  // region [rows x cur_w]
  int cur_w = def.feat_dim;
  for (int k = 0; k <= def.depth; ++k) {
    int nout = def.layer_out(k);
    int wb = def.w_blocks[std::size_t(k)], bb = def.b_blocks[std::size_t(k)];
    bool has_code = (k == 0 || k == def.skip_layer) && def.code_dim > 0;
    int gemm_cols = cur_w;
    std::uint32_t gemm_in = cur;
    if (k == def.skip_layer) {
      gemm_cols = def.hidden + def.feat_dim;
      std::uint32_t cc = tp.alloc(rows * std::uint32_t(gemm_cols));
      tp.copy2d_into(cur, rows, std::uint32_t(def.hidden), std::uint32_t(cur_w), cc,
                     std::uint32_t(gemm_cols));
      tp.copy2d_into(feat_start, rows, std::uint32_t(def.feat_dim),
                     std::uint32_t(def.feat_dim), cc + std::uint32_t(def.hidden),
                     std::uint32_t(gemm_cols));
      gemm_in = cc;
    }
    int w_rowstride = def.layer_in(k);
    BatchVar y;
    BatchVar vals;  // value rows [M x nout]
    if (has_code) {
      y = tp.linear(gemm_in, rows, 0, gemm_cols, nout, wb, -1, 0, w_rowstride);
      BatchVar br = tp.linear(code.start, 1, 1, def.code_dim, nout, wb, bb, gemm_cols,
                              w_rowstride);
      vals = tp.bcast_row_add({y.start, M * std::uint32_t(nout), 1}, br,
                              std::uint32_t(nout));
    } else {
      y = tp.linear(gemm_in, rows, M, gemm_cols, nout, wb, bb, 0, w_rowstride);
      vals = {y.start, M * std::uint32_t(nout), 1};
    }
    if (k == def.depth) {
      if (has_code || !with_tangents) {
        // splice biased values with tangent rows into one contiguous region
        if (!with_tangents) return vals;
        std::uint32_t o = tp.alloc(rows * std::uint32_t(nout));
        tp.copy_into(vals, o, 1);
        tp.copy_into({y.start + M * std::uint32_t(nout), 3 * M * std::uint32_t(nout), 1},
                     o + M * std::uint32_t(nout), 1);
        return {o, rows * std::uint32_t(nout), 1};
      }
      return y;
    }
    // softplus on values; tangent rows get sigma(v) * vt
    std::uint32_t act = tp.alloc(rows * std::uint32_t(nout));
    tp.ew1_into(OpK::Softplus, vals, act, M * std::uint32_t(nout));
    if (with_tangents) {
      BatchVar sg = tp.ew1(OpK::Sigmoid, vals);
      for (int t = 0; t < 3; ++t) {
        std::uint32_t off = std::uint32_t(t + 1) * M * std::uint32_t(nout);
        tp.ew2_into(OpK::Mul, sg, {y.start + off, M * std::uint32_t(nout), 1}, act + off,
                    M * std::uint32_t(nout));
      }
    }
    cur = act;
    cur_w = nout;
  }
  fail("mlp_tape: unreachable");
}

}  // namespace warpsdf
