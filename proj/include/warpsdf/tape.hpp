#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "warpsdf/common.hpp"
#include "warpsdf/params.hpp"
#include "warpsdf/scalar_funcs.hpp"

namespace warpsdf {

// Reverse-mode tape. Nodes are scalar-addressable; op records cover
// contiguous node ranges so batched kernels (elementwise lanes, dense layers,
// grid interpolation, segment reductions) stay cheap to record and replay.
// Forward values are computed eagerly as ops are emitted; backward() runs the
// reverse sweep and accumulates parameter adjoints into a GradSink.
//
// Non-differentiable points follow the subgradient-0 convention: abs/relu at
// 0, clamp and max/min at their kinks all propagate zero (ties in max2/min2
// route to the first operand).

enum class OpK : std::uint8_t {
  Copy, Neg, Abs, SqrtG, Exp, Log, Sin, Cos, Sigmoid, Softplus, Square, Relu,
  Step, CosSq, SincSq, SincSqD, Scale, Clamp, MaxC, MinC,
  Add, Sub, Mul, Div, Max2, Min2,
  Linear, Trilerp, PosEnc, SegSum, Transmit, ParamVec, BcastRowAdd, Copy2D,
};

inline const char* op_name(OpK k) {
  switch (k) {
    case OpK::Copy: return "copy"; case OpK::Neg: return "neg";
    case OpK::Abs: return "abs"; case OpK::SqrtG: return "sqrt";
    case OpK::Exp: return "exp"; case OpK::Log: return "log";
    case OpK::Sin: return "sin"; case OpK::Cos: return "cos";
    case OpK::Sigmoid: return "sigmoid"; case OpK::Softplus: return "softplus";
    case OpK::Square: return "square"; case OpK::Relu: return "relu";
    case OpK::Step: return "step"; case OpK::CosSq: return "cos_sq";
    case OpK::SincSq: return "sinc_sq"; case OpK::SincSqD: return "sinc_sq_d";
    case OpK::Scale: return "scale"; case OpK::Clamp: return "clamp";
    case OpK::MaxC: return "max_c"; case OpK::MinC: return "min_c";
    case OpK::Add: return "add"; case OpK::Sub: return "sub";
    case OpK::Mul: return "mul"; case OpK::Div: return "div";
    case OpK::Max2: return "max2"; case OpK::Min2: return "min2";
    case OpK::Linear: return "linear"; case OpK::Trilerp: return "trilerp";
    case OpK::PosEnc: return "posenc"; case OpK::SegSum: return "segsum";
    case OpK::Transmit: return "transmit"; case OpK::ParamVec: return "param_vec";
    case OpK::BcastRowAdd: return "bcast_row_add"; case OpK::Copy2D: return "copy2d";
  }
  return "?";
}

// A view over tape nodes: n logical elements at start, start+stride, ...
// stride 0 broadcasts a single node.
struct BatchVar {
  std::uint32_t start = 0;
  std::uint32_t n = 0;
  std::int32_t stride = 1;

  BatchVar slice(std::uint32_t off, std::uint32_t count, std::int32_t rel_stride = 1) const {
    return {start + off * std::uint32_t(stride < 0 ? 0 : stride),
            count, stride * rel_stride};
  }
};

// Geometry of a feature-grid block as the trilerp kernel needs it.
template <class Real>
struct GridGeom {
  int block = -1;
  int res = 0;       // nodes per axis
  int channels = 0;  // total channels C in the block
  Vec3<Real> origin = Vec3<Real>::Zero();
  Real spacing = Real(1);
};

template <class Real>
class Tape {
 public:
  using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapM = Eigen::Map<RowMat>;
  using MapCM = Eigen::Map<const RowMat>;

  explicit Tape(const ParamStore<Real>* store) : store_(store) {}

  void clear() {
    val_.clear();
    adj_.clear();
    ops_.clear();
    u32_.clear();
    realc_.clear();
    bytes_.clear();
  }

  std::size_t node_count() const { return val_.size(); }
  Real value(std::uint32_t id) const { return val_[id]; }
  const Real* values(std::uint32_t id) const { return &val_[id]; }
  Real adjoint(std::uint32_t id) const { return adj_[id]; }
  const std::uint8_t* bytes(std::uint32_t off) const { return &bytes_[off]; }
  const ParamStore<Real>& store() const { return *store_; }

  std::uint32_t alloc(std::uint32_t n) {
    std::uint32_t start = std::uint32_t(val_.size());
    val_.resize(val_.size() + n, Real(0));
    return start;
  }

  // ---- leaves -------------------------------------------------------------

  BatchVar leaf(const Real* data, std::uint32_t n, std::int32_t src_stride = 1) {
    std::uint32_t o = alloc(n);
    for (std::uint32_t i = 0; i < n; ++i) val_[o + i] = data[i * src_stride];
    return {o, n, 1};
  }

  BatchVar leaf_scalar(Real v) {
    std::uint32_t o = alloc(1);
    val_[o] = v;
    return {o, 1, 0};
  }

  BatchVar view(std::uint32_t start, std::uint32_t n, std::int32_t stride = 1) const {
    return {start, n, stride};
  }

  // ---- elementwise --------------------------------------------------------

  BatchVar ew1(OpK k, BatchVar a, double c0 = 0, double c1 = 0) {
    std::uint32_t n = a.stride == 0 ? 1 : a.n;
    return ew1_into(k, a, alloc(n), n, c0, c1);
  }

  BatchVar ew1_into(OpK k, BatchVar a, std::uint32_t out, std::uint32_t n,
                    double c0 = 0, double c1 = 0) {
    Op op;
    op.kind = k; op.n = n; op.out = out;
    op.a = a.start; op.sa = a.stride;
    op.c0 = c0; op.c1 = c1;
    ops_.push_back(op);
    fwd_ew1(op);
    return {out, n, 1};
  }

  BatchVar ew2(OpK k, BatchVar a, BatchVar b) {
    std::uint32_t n = std::max(a.stride == 0 ? 1u : a.n, b.stride == 0 ? 1u : b.n);
    return ew2_into(k, a, b, alloc(n), n);
  }

  BatchVar ew2_into(OpK k, BatchVar a, BatchVar b, std::uint32_t out, std::uint32_t n) {
    Op op;
    op.kind = k; op.n = n; op.out = out;
    op.a = a.start; op.sa = a.stride;
    op.b = b.start; op.sb = b.stride;
    ops_.push_back(op);
    fwd_ew2(op);
    return {out, n, 1};
  }

  // Copies src into an existing region with an output stride (column writes).
  void copy_into(BatchVar src, std::uint32_t out_start, std::int32_t out_stride) {
    Op op;
    op.kind = OpK::Copy; op.n = src.n; op.out = out_start;
    op.a = src.start; op.sa = src.stride; op.so = out_stride;
    ops_.push_back(op);
    const Op& p = ops_.back();
    for (std::uint32_t i = 0; i < p.n; ++i)
      val_[p.out + i * p.so] = val_[p.a + std::int64_t(i) * p.sa];
  }

  BatchVar copy(BatchVar src) {
    std::uint32_t o = alloc(src.n);
    copy_into(src, o, 1);
    return {o, src.n, 1};
  }

  // Copies a [rows x cols] block between row-major regions.
  void copy2d_into(std::uint32_t in_start, std::uint32_t rows, std::uint32_t cols,
                   std::uint32_t in_rowstride, std::uint32_t out_start,
                   std::uint32_t out_rowstride) {
    Op op;
    op.kind = OpK::Copy2D; op.n = rows; op.out = out_start; op.a = in_start;
    op.aux = push_u32({cols, in_rowstride, out_rowstride});
    ops_.push_back(op);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t j = 0; j < cols; ++j)
        val_[out_start + r * out_rowstride + j] = val_[in_start + r * in_rowstride + j];
  }

  // ---- fused dense layer ---------------------------------------------------
  // Y[rows, out_dim] = X[rows, cols] * Wsub^T (+ b on the first rows_bias
  // rows), where Wsub is the [out_dim x cols] column slice of the weight
  // block starting at w_col (the block's full row width is w_rowstride). X
  // must be a contiguous row-major node region. The column slice lets one
  // weight matrix serve a split input (encoded point via GEMM plus per-frame
  // code via a 1-row call).
  BatchVar linear(std::uint32_t x_start, std::uint32_t rows, std::uint32_t rows_bias,
                  int cols, int out_dim, int w_block, int b_block, int w_col = 0,
                  int w_rowstride = -1) {
    if (w_rowstride < 0) w_rowstride = cols;
    std::uint32_t o = alloc(rows * std::uint32_t(out_dim));
    Op op;
    op.kind = OpK::Linear; op.n = rows * std::uint32_t(out_dim); op.out = o;
    op.a = x_start;
    op.aux = push_u32({rows, rows_bias, std::uint32_t(cols), std::uint32_t(out_dim),
                       std::uint32_t(w_block),
                       b_block < 0 ? 0xFFFFFFFFu : std::uint32_t(b_block),
                       std::uint32_t(w_col), std::uint32_t(w_rowstride)});
    ops_.push_back(op);
    fwd_linear(ops_.back());
    return {o, op.n, 1};
  }

  // ---- fused trilinear interpolation ----------------------------------------
  // Gathers channels [c_begin, c_begin+c_count) for M samples. x[3] are the
  // coordinate views; xt (optional, 9 views ordered [coord][seed_axis]) adds 3
  // tangent row groups. Output region is [(1 or 4)*M x c_count] row-major with
  // tangent rows appended group-wise. Out-of-bounds samples are clamped and
  // flagged; the flag bytes live on the tape (offset out via oob_off).
  BatchVar trilerp(const GridGeom<Real>& g, int c_begin, int c_count,
                   const BatchVar x[3], const BatchVar* xt, std::uint32_t& oob_off) {
    std::uint32_t M = x[0].n;
    bool tan = xt != nullptr;
    std::uint32_t rows = (tan ? 4 : 1) * M;
    std::uint32_t o = alloc(rows * std::uint32_t(c_count));
    oob_off = std::uint32_t(bytes_.size());
    bytes_.resize(bytes_.size() + M, 0);
    std::uint32_t geom = std::uint32_t(realc_.size());
    realc_.push_back(g.origin[0]);
    realc_.push_back(g.origin[1]);
    realc_.push_back(g.origin[2]);
    realc_.push_back(g.spacing);
    std::vector<std::uint32_t> aux = {std::uint32_t(g.block), std::uint32_t(g.res),
                                      std::uint32_t(g.channels), std::uint32_t(c_begin),
                                      std::uint32_t(c_count), M, tan ? 1u : 0u,
                                      geom, oob_off};
    for (int m = 0; m < 3; ++m) {
      aux.push_back(x[m].start);
      aux.push_back(std::uint32_t(x[m].stride));
    }
    if (tan)
      for (int i = 0; i < 9; ++i) {
        aux.push_back(xt[i].start);
        aux.push_back(std::uint32_t(xt[i].stride));
      }
    Op op;
    op.kind = OpK::Trilerp; op.n = rows * std::uint32_t(c_count); op.out = o;
    op.aux = push_u32(aux);
    ops_.push_back(op);
    fwd_trilerp(ops_.back());
    return {o, op.n, 1};
  }

  // ---- fused positional encoding --------------------------------------------
  // Encodes M constant points (xyz interleaved) into [x, w_k sin(2^k pi x),
  // w_k cos(2^k pi x)]; with_tangents appends the 3 spatial-derivative row
  // groups (seeds = identity). Inputs are constants, so this op never
  // participates in backward.
  BatchVar posenc(const Real* xyz, std::uint32_t M, int L, const Real* win,
                  bool with_tangents) {
    int E = 3 + 6 * L;
    std::uint32_t rows = (with_tangents ? 4 : 1) * M;
    std::uint32_t o = alloc(rows * std::uint32_t(E));
    std::uint32_t xoff = std::uint32_t(realc_.size());
    realc_.insert(realc_.end(), xyz, xyz + 3 * M);
    std::uint32_t woff = std::uint32_t(realc_.size());
    realc_.insert(realc_.end(), win, win + L);
    Op op;
    op.kind = OpK::PosEnc; op.n = rows * std::uint32_t(E); op.out = o;
    op.aux = push_u32({xoff, M, std::uint32_t(L), with_tangents ? 1u : 0u, woff});
    ops_.push_back(op);
    fwd_posenc(ops_.back());
    return {o, op.n, 1};
  }

  // ---- segment reductions ---------------------------------------------------

  BatchVar segsum(BatchVar a, std::uint32_t seg) {
    std::uint32_t out_n = a.n / seg;
    std::uint32_t o = alloc(out_n);
    Op op;
    op.kind = OpK::SegSum; op.n = out_n; op.out = o;
    op.a = a.start; op.sa = a.stride; op.b = seg;
    ops_.push_back(op);
    for (std::uint32_t r = 0; r < out_n; ++r) {
      Real s = 0;
      for (std::uint32_t i = 0; i < seg; ++i)
        s += val_[a.start + std::int64_t(r * seg + i) * a.stride];
      val_[o + r] = s;
    }
    return {o, out_n, 1};
  }

  BatchVar sum_all(BatchVar a) { return segsum(a, a.n); }

  // Exclusive per-segment transmittance: T_0 = 1, T_i = T_{i-1} * (1 - a_{i-1}).
  BatchVar transmit(BatchVar alpha, std::uint32_t seg) {
    require(alpha.stride == 1, "transmit: alpha must be contiguous");
    std::uint32_t o = alloc(alpha.n);
    Op op;
    op.kind = OpK::Transmit; op.n = alpha.n; op.out = o;
    op.a = alpha.start; op.b = seg;
    ops_.push_back(op);
    for (std::uint32_t r = 0; r < alpha.n / seg; ++r) {
      Real T = 1;
      for (std::uint32_t i = 0; i < seg; ++i) {
        val_[o + r * seg + i] = T;
        T *= Real(1) - val_[alpha.start + r * seg + i];
      }
    }
    return {o, alpha.n, 1};
  }

  // ---- parameter access ------------------------------------------------------

  BatchVar param_vec(int block, std::uint32_t offset, std::uint32_t n) {
    require(!store_->block(block).sparse_grad, "param_vec: not for sparse blocks");
    std::uint32_t o = alloc(n);
    Op op;
    op.kind = OpK::ParamVec; op.n = n; op.out = o;
    op.a = std::uint32_t(block); op.b = offset;
    ops_.push_back(op);
    const Real* src = store_->block(block).v.data() + offset;
    for (std::uint32_t i = 0; i < n; ++i) val_[o + i] = src[i];
    return {o, n, 1};
  }

  // out[M x d] = mat + broadcast row (the per-frame code contribution).
  BatchVar bcast_row_add(BatchVar mat, BatchVar row, std::uint32_t d) {
    std::uint32_t o = alloc(mat.n);
    Op op;
    op.kind = OpK::BcastRowAdd; op.n = mat.n; op.out = o;
    op.a = mat.start; op.b = row.start;
    op.aux = push_u32({d});
    ops_.push_back(op);
    std::uint32_t rows = mat.n / d;
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t j = 0; j < d; ++j)
        val_[o + r * d + j] = val_[mat.start + r * d + j] + val_[row.start + j];
    return {o, mat.n, 1};
  }

  // ---- backward ---------------------------------------------------------------

  void backward(std::uint32_t out_node, GradSink<Real>* sink, bool check_nan = false) {
    adj_.assign(val_.size(), Real(0));
    adj_[out_node] = Real(1);
    for (std::size_t k = ops_.size(); k-- > 0;) {
      const Op& op = ops_[k];
      bwd_op(op, sink);
      if (check_nan) check_op_adjoints(op);
    }
  }

  // Re-runs every op's forward kernel in creation order (used after the
  // parameter store changed, e.g. by finite-difference probes).
  void replay_forward() {
    for (const Op& op : ops_) fwd_op(op);
  }

 private:
  struct Op {
    OpK kind{};
    std::uint32_t n = 0;
    std::uint32_t out = 0;
    std::uint32_t a = 0, b = 0;
    std::int32_t sa = 1, sb = 1, so = 1;
    std::uint32_t aux = 0;
    double c0 = 0, c1 = 0;
  };

  const ParamStore<Real>* store_;
  std::vector<Real> val_, adj_;
  std::vector<Op> ops_;
  std::vector<std::uint32_t> u32_;
  std::vector<Real> realc_;
  std::vector<std::uint8_t> bytes_;

  std::uint32_t push_u32(const std::vector<std::uint32_t>& v) {
    std::uint32_t off = std::uint32_t(u32_.size());
    u32_.insert(u32_.end(), v.begin(), v.end());
    return off;
  }

  static Real unary_f(OpK k, Real x, double c0, double c1) {
    switch (k) {
      case OpK::Copy: return x;
      case OpK::Neg: return -x;
      case OpK::Abs: return std::abs(x);
      case OpK::SqrtG: return std::sqrt(std::max(x, Real(0)));
      case OpK::Exp: return std::exp(x);
      case OpK::Log: return std::log(x);
      case OpK::Sin: return std::sin(x);
      case OpK::Cos: return std::cos(x);
      case OpK::Sigmoid: return sigmoid(x);
      case OpK::Softplus: return softplus(x);
      case OpK::Square: return x * x;
      case OpK::Relu: return x > Real(0) ? x : Real(0);
      case OpK::Step: return x > Real(0) ? Real(1) : Real(0);
      case OpK::CosSq: return cos_sq(x);
      case OpK::SincSq: return sinc_sq(x);
      case OpK::SincSqD: return sinc_sq_d(x);
      case OpK::Scale: return Real(c0) * x + Real(c1);
      case OpK::Clamp: return x < Real(c0) ? Real(c0) : (x > Real(c1) ? Real(c1) : x);
      case OpK::MaxC: return std::max(x, Real(c0));
      case OpK::MinC: return std::min(x, Real(c0));
      default: fail("unary_f: not a unary op: ", op_name(k));
    }
  }

  static Real unary_df(OpK k, Real x, double c0, double c1) {
    switch (k) {
      case OpK::Copy: return Real(1);
      case OpK::Neg: return Real(-1);
      case OpK::Abs: return x > Real(0) ? Real(1) : (x < Real(0) ? Real(-1) : Real(0));
      case OpK::SqrtG:
        return x > Real(c0) ? Real(0.5) / std::sqrt(x) : Real(0);
      case OpK::Exp: return std::exp(x);
      case OpK::Log: return Real(1) / x;
      case OpK::Sin: return std::cos(x);
      case OpK::Cos: return -std::sin(x);
      case OpK::Sigmoid: {
        Real s = sigmoid(x);
        return s * (Real(1) - s);
      }
      case OpK::Softplus: return sigmoid(x);
      case OpK::Square: return Real(2) * x;
      case OpK::Relu: return x > Real(0) ? Real(1) : Real(0);
      case OpK::Step: return Real(0);
      case OpK::CosSq: return cos_sq_d(x);
      case OpK::SincSq: return sinc_sq_d(x);
      case OpK::SincSqD: return sinc_sq_dd(x);
      case OpK::Scale: return Real(c0);
      case OpK::Clamp: return (x > Real(c0) && x < Real(c1)) ? Real(1) : Real(0);
      case OpK::MaxC: return x > Real(c0) ? Real(1) : Real(0);
      case OpK::MinC: return x < Real(c0) ? Real(1) : Real(0);
      default: fail("unary_df: not a unary op: ", op_name(k));
    }
  }

  void fwd_ew1(const Op& op) {
    for (std::uint32_t i = 0; i < op.n; ++i)
      val_[op.out + i] = unary_f(op.kind, val_[op.a + std::int64_t(i) * op.sa], op.c0, op.c1);
  }

  void fwd_ew2(const Op& op) {
    for (std::uint32_t i = 0; i < op.n; ++i) {
      Real x = val_[op.a + std::int64_t(i) * op.sa];
      Real y = val_[op.b + std::int64_t(i) * op.sb];
      Real r;
      switch (op.kind) {
        case OpK::Add: r = x + y; break;
        case OpK::Sub: r = x - y; break;
        case OpK::Mul: r = x * y; break;
        case OpK::Div: r = x / y; break;
        case OpK::Max2: r = x >= y ? x : y; break;
        case OpK::Min2: r = x <= y ? x : y; break;
        default: fail("fwd_ew2: not a binary op: ", op_name(op.kind));
      }
      val_[op.out + i] = r;
    }
  }

  void fwd_linear(const Op& op) {
    const std::uint32_t* x = &u32_[op.aux];
    std::uint32_t rows = x[0], rows_bias = x[1], in = x[2], out = x[3];
    const auto& W = store_->block(int(x[4]));
    using StrideT = Eigen::OuterStride<>;
    MapCM Xm(&val_[op.a], rows, in);
    Eigen::Map<const RowMat, 0, StrideT> Wm(W.v.data() + x[6], out, in, StrideT(x[7]));
    MapM Ym(&val_[op.out], rows, out);
    Ym.noalias() = Xm * Wm.transpose();
    if (x[5] != 0xFFFFFFFFu) {
      const auto& B = store_->block(int(x[5]));
      Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>> bm(B.v.data(), out);
      Ym.topRows(rows_bias).rowwise() += bm;
    }
  }

  void fwd_posenc(const Op& op) {
    const std::uint32_t* u = &u32_[op.aux];
    const Real* xyz = &realc_[u[0]];
    std::uint32_t M = u[1];
    int L = int(u[2]);
    bool tan = u[3] != 0;
    const Real* win = &realc_[u[4]];
    int E = 3 + 6 * L;
    for (std::uint32_t i = 0; i < M; ++i) {
      const Real* p = xyz + 3 * i;
      Real* row = &val_[op.out + std::size_t(i) * E];
      row[0] = p[0]; row[1] = p[1]; row[2] = p[2];
      for (int k = 0; k < L; ++k) {
        Real w = win[k];
        Real om = Real(kPi) * Real(std::int64_t(1) << k);
        for (int m = 0; m < 3; ++m) {
          row[3 + 6 * k + m] = w * std::sin(om * p[m]);
          row[6 + 6 * k + m] = w * std::cos(om * p[m]);
        }
      }
      if (tan) {
        for (int t = 0; t < 3; ++t) {
          Real* trow = &val_[op.out + (std::size_t(t + 1) * M + i) * E];
          for (int c = 0; c < E; ++c) trow[c] = Real(0);
          trow[t] = Real(1);
          for (int k = 0; k < L; ++k) {
            Real w = win[k];
            Real om = Real(kPi) * Real(std::int64_t(1) << k);
            trow[3 + 6 * k + t] = w * om * std::cos(om * p[t]);
            trow[6 + 6 * k + t] = -w * om * std::sin(om * p[t]);
          }
        }
      }
    }
  }

  struct Corners {
    std::int64_t node[8];
    Real w[8];
    Real dw[3][8];    // d w / d f_m
    Real g[3];        // d f_m / d p_m (0 when clamped)
    Real f[3];
  };

  void trilerp_cell(const std::uint32_t* u, std::uint32_t i, Corners& c) const {
    int N = int(u[1]);
    const Real* geom = &realc_[u[7]];
    Real h = geom[3];
    std::int64_t cell[3];
    for (int m = 0; m < 3; ++m) {
      Real p = val_[u[9 + 2 * m] + std::int64_t(i) * std::int32_t(u[10 + 2 * m])];
      Real uu = (p - geom[m]) / h;
      bool inside = uu >= Real(0) && uu <= Real(N - 1);
      if (uu < Real(0)) uu = Real(0);
      if (uu > Real(N - 1)) uu = Real(N - 1);
      std::int64_t ci = std::int64_t(std::floor(double(uu)));
      if (ci > N - 2) ci = N - 2;
      cell[m] = ci;
      c.f[m] = uu - Real(ci);
      c.g[m] = inside ? Real(1) / h : Real(0);
    }
    for (int d = 0; d < 8; ++d) {
      int dx = d & 1, dy = (d >> 1) & 1, dz = (d >> 2) & 1;
      Real wx = dx ? c.f[0] : Real(1) - c.f[0];
      Real wy = dy ? c.f[1] : Real(1) - c.f[1];
      Real wz = dz ? c.f[2] : Real(1) - c.f[2];
      c.w[d] = wx * wy * wz;
      c.dw[0][d] = (dx ? Real(1) : Real(-1)) * wy * wz;
      c.dw[1][d] = (dy ? Real(1) : Real(-1)) * wx * wz;
      c.dw[2][d] = (dz ? Real(1) : Real(-1)) * wx * wy;
      c.node[d] = ((cell[0] + dx) * N + (cell[1] + dy)) * N + (cell[2] + dz);
    }
  }

  void fwd_trilerp(const Op& op) {
    const std::uint32_t* u = &u32_[op.aux];
    int C = int(u[2]), cb = int(u[3]), cc = int(u[4]);
    std::uint32_t M = u[5];
    bool tan = u[6] != 0;
    int N = int(u[1]);
    const Real* geom = &realc_[u[7]];
    const Real* G = store_->block(int(u[0])).v.data();
    Corners cr;
    std::vector<Real> D(3 * std::size_t(cc));
    for (std::uint32_t i = 0; i < M; ++i) {
      trilerp_cell(u, i, cr);
      // out-of-bounds flag
      bool oob = false;
      for (int m = 0; m < 3; ++m) {
        Real p = val_[u[9 + 2 * m] + std::int64_t(i) * std::int32_t(u[10 + 2 * m])];
        Real lo = geom[m], hi = geom[m] + geom[3] * Real(N - 1);
        if (p < lo || p > hi) oob = true;
      }
      bytes_[u[8] + i] = oob ? 1 : 0;
      Real* out_row = &val_[op.out + std::size_t(i) * cc];
      for (int j = 0; j < cc; ++j) out_row[j] = Real(0);
      if (tan) std::fill(D.begin(), D.end(), Real(0));
      for (int d = 0; d < 8; ++d) {
        const Real* gc = G + cr.node[d] * C + cb;
        Real w = cr.w[d];
        for (int j = 0; j < cc; ++j) out_row[j] += w * gc[j];
        if (tan)
          for (int m = 0; m < 3; ++m) {
            Real dm = cr.dw[m][d];
            Real* Dm = &D[std::size_t(m) * cc];
            for (int j = 0; j < cc; ++j) Dm[j] += dm * gc[j];
          }
      }
      if (tan) {
        for (int t = 0; t < 3; ++t) {
          Real* trow = &val_[op.out + (std::size_t(t + 1) * M + i) * cc];
          Real ft[3];
          for (int m = 0; m < 3; ++m)
            ft[m] = cr.g[m] *
                    val_[u[15 + 2 * (3 * m + t)] +
                         std::int64_t(i) * std::int32_t(u[16 + 2 * (3 * m + t)])];
          for (int j = 0; j < cc; ++j)
            trow[j] = ft[0] * D[j] + ft[1] * D[cc + j] + ft[2] * D[2 * std::size_t(cc) + j];
        }
      }
    }
  }

  void fwd_op(const Op& op) {
    switch (op.kind) {
      case OpK::Linear: fwd_linear(op); break;
      case OpK::Trilerp: fwd_trilerp(op); break;
      case OpK::PosEnc: fwd_posenc(op); break;
      case OpK::ParamVec: {
        const Real* src = store_->block(int(op.a)).v.data() + op.b;
        for (std::uint32_t i = 0; i < op.n; ++i) val_[op.out + i] = src[i];
        break;
      }
      case OpK::SegSum: {
        std::uint32_t seg = op.b;
        for (std::uint32_t r = 0; r < op.n; ++r) {
          Real s = 0;
          for (std::uint32_t i = 0; i < seg; ++i)
            s += val_[op.a + std::int64_t(r * seg + i) * op.sa];
          val_[op.out + r] = s;
        }
        break;
      }
      case OpK::Transmit: {
        std::uint32_t seg = op.b;
        for (std::uint32_t r = 0; r < op.n / seg; ++r) {
          Real T = 1;
          for (std::uint32_t i = 0; i < seg; ++i) {
            val_[op.out + r * seg + i] = T;
            T *= Real(1) - val_[op.a + r * seg + i];
          }
        }
        break;
      }
      case OpK::BcastRowAdd: {
        std::uint32_t d = u32_[op.aux];
        for (std::uint32_t r = 0; r < op.n / d; ++r)
          for (std::uint32_t j = 0; j < d; ++j)
            val_[op.out + r * d + j] = val_[op.a + r * d + j] + val_[op.b + j];
        break;
      }
      case OpK::Copy2D: {
        const std::uint32_t* u = &u32_[op.aux];
        for (std::uint32_t r = 0; r < op.n; ++r)
          for (std::uint32_t j = 0; j < u[0]; ++j)
            val_[op.out + r * u[2] + j] = val_[op.a + r * u[1] + j];
        break;
      }
      case OpK::Copy:
        for (std::uint32_t i = 0; i < op.n; ++i)
          val_[op.out + std::int64_t(i) * op.so] = val_[op.a + std::int64_t(i) * op.sa];
        break;
      case OpK::Add: case OpK::Sub: case OpK::Mul: case OpK::Div:
      case OpK::Max2: case OpK::Min2:
        fwd_ew2(op);
        break;
      default:
        fwd_ew1(op);
        break;
    }
  }

  void bwd_op(const Op& op, GradSink<Real>* sink) {
    switch (op.kind) {
      case OpK::Copy:
        for (std::uint32_t i = 0; i < op.n; ++i)
          adj_[op.a + std::int64_t(i) * op.sa] += adj_[op.out + std::int64_t(i) * op.so];
        break;
      case OpK::Copy2D: {
        const std::uint32_t* u = &u32_[op.aux];
        for (std::uint32_t r = 0; r < op.n; ++r)
          for (std::uint32_t j = 0; j < u[0]; ++j)
            adj_[op.a + r * u[1] + j] += adj_[op.out + r * u[2] + j];
        break;
      }
      case OpK::Add:
        for (std::uint32_t i = 0; i < op.n; ++i) {
          Real d = adj_[op.out + i];
          adj_[op.a + std::int64_t(i) * op.sa] += d;
          adj_[op.b + std::int64_t(i) * op.sb] += d;
        }
        break;
      case OpK::Sub:
        for (std::uint32_t i = 0; i < op.n; ++i) {
          Real d = adj_[op.out + i];
          adj_[op.a + std::int64_t(i) * op.sa] += d;
          adj_[op.b + std::int64_t(i) * op.sb] -= d;
        }
        break;
      case OpK::Mul:
        for (std::uint32_t i = 0; i < op.n; ++i) {
          Real d = adj_[op.out + i];
          Real x = val_[op.a + std::int64_t(i) * op.sa];
          Real y = val_[op.b + std::int64_t(i) * op.sb];
          adj_[op.a + std::int64_t(i) * op.sa] += d * y;
          adj_[op.b + std::int64_t(i) * op.sb] += d * x;
        }
        break;
      case OpK::Div:
        for (std::uint32_t i = 0; i < op.n; ++i) {
          Real d = adj_[op.out + i];
          Real x = val_[op.a + std::int64_t(i) * op.sa];
          Real y = val_[op.b + std::int64_t(i) * op.sb];
          adj_[op.a + std::int64_t(i) * op.sa] += d / y;
          adj_[op.b + std::int64_t(i) * op.sb] -= d * x / (y * y);
        }
        break;
      case OpK::Max2:
      case OpK::Min2:
        for (std::uint32_t i = 0; i < op.n; ++i) {
          Real d = adj_[op.out + i];
          Real x = val_[op.a + std::int64_t(i) * op.sa];
          Real y = val_[op.b + std::int64_t(i) * op.sb];
          bool first = op.kind == OpK::Max2 ? (x >= y) : (x <= y);
          if (first)
            adj_[op.a + std::int64_t(i) * op.sa] += d;
          else
            adj_[op.b + std::int64_t(i) * op.sb] += d;
        }
        break;
      case OpK::Linear: bwd_linear(op, sink); break;
      case OpK::Trilerp: bwd_trilerp(op, sink); break;
      case OpK::PosEnc: break;  // constant inputs
      case OpK::SegSum: {
        std::uint32_t seg = op.b;
        for (std::uint32_t r = 0; r < op.n; ++r) {
          Real d = adj_[op.out + r];
          for (std::uint32_t i = 0; i < seg; ++i)
            adj_[op.a + std::int64_t(r * seg + i) * op.sa] += d;
        }
        break;
      }
      case OpK::Transmit: {
        // c_i = 1 - a_i, T_j = prod_{k<j} c_k. Division-free reverse
        // recurrence: H_i = Tbar_{i+1} + c_{i+1} H_{i+1}; cbar_i = T_i H_i.
        std::uint32_t seg = op.b;
        for (std::uint32_t r = 0; r < op.n / seg; ++r) {
          const Real* a = &val_[op.a + r * seg];
          const Real* T = &val_[op.out + r * seg];
          const Real* Tb = &adj_[op.out + r * seg];
          Real H = Real(0);
          for (std::int64_t i = std::int64_t(seg) - 2; i >= 0; --i) {
            H = Tb[i + 1] + (Real(1) - a[i + 1]) * H;
            adj_[op.a + r * seg + std::uint32_t(i)] -= T[i] * H;
          }
        }
        break;
      }
      case OpK::ParamVec: {
        Real* g = sink->dense(int(op.a)) + op.b;
        for (std::uint32_t i = 0; i < op.n; ++i) g[i] += adj_[op.out + i];
        break;
      }
      case OpK::BcastRowAdd: {
        std::uint32_t d = u32_[op.aux];
        for (std::uint32_t r = 0; r < op.n / d; ++r)
          for (std::uint32_t j = 0; j < d; ++j) {
            Real g = adj_[op.out + r * d + j];
            adj_[op.a + r * d + j] += g;
            adj_[op.b + j] += g;
          }
        break;
      }
      default:
        for (std::uint32_t i = 0; i < op.n; ++i) {
          Real d = adj_[op.out + i];
          if (d == Real(0)) continue;
          Real x = val_[op.a + std::int64_t(i) * op.sa];
          adj_[op.a + std::int64_t(i) * op.sa] += d * unary_df(op.kind, x, op.c0, op.c1);
        }
        break;
    }
  }

  void bwd_linear(const Op& op, GradSink<Real>* sink) {
    const std::uint32_t* x = &u32_[op.aux];
    std::uint32_t rows = x[0], rows_bias = x[1], in = x[2], out = x[3];
    const auto& W = store_->block(int(x[4]));
    using StrideT = Eigen::OuterStride<>;
    MapCM dY(&adj_[op.out], rows, out);
    Eigen::Map<const RowMat, 0, StrideT> Wm(W.v.data() + x[6], out, in, StrideT(x[7]));
    MapCM Xm(&val_[op.a], rows, in);
    MapM dX(&adj_[op.a], rows, in);
    dX.noalias() += dY * Wm;
    Eigen::Map<RowMat, 0, StrideT> dW(sink->dense(int(x[4])) + x[6], out, in, StrideT(x[7]));
    dW.noalias() += dY.transpose() * Xm;
    if (x[5] != 0xFFFFFFFFu) {
      Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>> db(sink->dense(int(x[5])), out);
      db += dY.topRows(rows_bias).colwise().sum();
    }
  }

  void bwd_trilerp(const Op& op, GradSink<Real>* sink) {
    const std::uint32_t* u = &u32_[op.aux];
    int block = int(u[0]);
    int C = int(u[2]), cb = int(u[3]), cc = int(u[4]);
    std::uint32_t M = u[5];
    bool tan = u[6] != 0;
    const Real* G = store_->block(block).v.data();
    Corners cr;
    std::vector<Real> D(3 * std::size_t(cc)), Ep(3 * std::size_t(cc));
    // second-derivative pair order: (0,1), (0,2), (1,2)
    static constexpr int pair_a[3] = {0, 0, 1};
    static constexpr int pair_b[3] = {1, 2, 2};
    for (std::uint32_t i = 0; i < M; ++i) {
      trilerp_cell(u, i, cr);
      const Real* Ab = &adj_[op.out + std::size_t(i) * cc];
      std::fill(D.begin(), D.end(), Real(0));
      if (tan) std::fill(Ep.begin(), Ep.end(), Real(0));
      for (int d = 0; d < 8; ++d) {
        const Real* gc = G + cr.node[d] * C + cb;
        for (int m = 0; m < 3; ++m) {
          Real dm = cr.dw[m][d];
          Real* Dm = &D[std::size_t(m) * cc];
          for (int j = 0; j < cc; ++j) Dm[j] += dm * gc[j];
        }
        if (tan) {
          int dx = d & 1, dy = (d >> 1) & 1, dz = (d >> 2) & 1;
          Real sx = dx ? Real(1) : Real(-1);
          Real sy = dy ? Real(1) : Real(-1);
          Real sz = dz ? Real(1) : Real(-1);
          Real wx = dx ? cr.f[0] : Real(1) - cr.f[0];
          Real wy = dy ? cr.f[1] : Real(1) - cr.f[1];
          Real wz = dz ? cr.f[2] : Real(1) - cr.f[2];
          Real e01 = sx * sy * wz, e02 = sx * sz * wy, e12 = sy * sz * wx;
          for (int j = 0; j < cc; ++j) {
            Ep[j] += e01 * gc[j];
            Ep[cc + j] += e02 * gc[j];
            Ep[2 * std::size_t(cc) + j] += e12 * gc[j];
          }
        }
      }
      Real ft[3][3] = {};  // [coord m][seed t]
      const Real* Bt[3] = {nullptr, nullptr, nullptr};
      if (tan)
        for (int t = 0; t < 3; ++t) {
          Bt[t] = &adj_[op.out + (std::size_t(t + 1) * M + i) * cc];
          for (int m = 0; m < 3; ++m)
            ft[m][t] = cr.g[m] *
                       val_[u[15 + 2 * (3 * m + t)] +
                            std::int64_t(i) * std::int32_t(u[16 + 2 * (3 * m + t)])];
        }
      // grid adjoints
      for (int d = 0; d < 8; ++d) {
        Real* gr = sink->sparse_row(block, cr.node[d]);
        Real ww[3] = {};
        if (tan)
          for (int t = 0; t < 3; ++t)
            ww[t] = cr.dw[0][d] * ft[0][t] + cr.dw[1][d] * ft[1][t] + cr.dw[2][d] * ft[2][t];
        for (int j = 0; j < cc; ++j) {
          Real acc = Ab[j] * cr.w[d];
          if (tan) acc += Bt[0][j] * ww[0] + Bt[1][j] * ww[1] + Bt[2][j] * ww[2];
          gr[cb + j] += acc;
        }
      }
      // coordinate adjoints (value part) and tangent-node adjoints
      Real SA[3] = {};
      for (int m = 0; m < 3; ++m)
        for (int j = 0; j < cc; ++j) SA[m] += Ab[j] * D[std::size_t(m) * cc + j];
      Real dp[3] = {SA[0], SA[1], SA[2]};
      if (tan) {
        Real SB[3][3] = {};   // [seed t][coord m]
        Real EB[3][3] = {};   // [pair][seed t]
        for (int t = 0; t < 3; ++t)
          for (int j = 0; j < cc; ++j) {
            Real b = Bt[t][j];
            SB[t][0] += b * D[j];
            SB[t][1] += b * D[cc + j];
            SB[t][2] += b * D[2 * std::size_t(cc) + j];
            EB[0][t] += b * Ep[j];
            EB[1][t] += b * Ep[cc + j];
            EB[2][t] += b * Ep[2 * std::size_t(cc) + j];
          }
        for (int t = 0; t < 3; ++t)
          for (int m = 0; m < 3; ++m)
            adj_[u[15 + 2 * (3 * m + t)] +
                 std::int64_t(i) * std::int32_t(u[16 + 2 * (3 * m + t)])] +=
                cr.g[m] * SB[t][m];
        for (int pr = 0; pr < 3; ++pr) {
          int ma = pair_a[pr], mb = pair_b[pr];
          for (int t = 0; t < 3; ++t) {
            dp[ma] += EB[pr][t] * ft[mb][t];
            dp[mb] += EB[pr][t] * ft[ma][t];
          }
        }
      }
      for (int m = 0; m < 3; ++m)
        adj_[u[9 + 2 * m] + std::int64_t(i) * std::int32_t(u[10 + 2 * m])] += cr.g[m] * dp[m];
    }
  }

  void check_op_adjoints(const Op& op) const {
    auto scan = [&](std::uint32_t start, std::uint32_t n, std::int32_t stride) {
      for (std::uint32_t i = 0; i < n; ++i)
        if (!std::isfinite(double(adj_[start + std::int64_t(i) * stride])))
          fail("non-finite adjoint produced by op '", op_name(op.kind), "'");
    };
    switch (op.kind) {
      case OpK::PosEnc: case OpK::ParamVec:
        break;
      case OpK::Linear: {
        const std::uint32_t* x = &u32_[op.aux];
        scan(op.a, x[0] * x[2], 1);
        break;
      }
      case OpK::Trilerp: {
        const std::uint32_t* u = &u32_[op.aux];
        for (int m = 0; m < 3; ++m) scan(u[9 + 2 * m], u[5], std::int32_t(u[10 + 2 * m]));
        break;
      }
      default:
        scan(op.a, op.n, op.sa);
        break;
    }
  }
};

// Scalar handle for the few single-value computations (loss assembly, small
// test graphs).
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  std::uint32_t id = 0;

  Real value() const { return tape->value(id); }
  BatchVar bv() const { return {id, 1, 0}; }
};

template <class Real>
Var<Real> make_var(Tape<Real>& t, Real v) {
  return {&t, t.leaf_scalar(v).start};
}

template <class Real>
Var<Real> vop(OpK k, Var<Real> a, Var<Real> b) {
  return {a.tape, a.tape->ew2(k, a.bv(), b.bv()).start};
}
template <class Real>
Var<Real> vop1(OpK k, Var<Real> a, double c0 = 0, double c1 = 0) {
  return {a.tape, a.tape->ew1(k, a.bv(), c0, c1).start};
}

template <class Real> Var<Real> operator+(Var<Real> a, Var<Real> b) { return vop(OpK::Add, a, b); }
template <class Real> Var<Real> operator-(Var<Real> a, Var<Real> b) { return vop(OpK::Sub, a, b); }
template <class Real> Var<Real> operator*(Var<Real> a, Var<Real> b) { return vop(OpK::Mul, a, b); }
template <class Real> Var<Real> operator/(Var<Real> a, Var<Real> b) { return vop(OpK::Div, a, b); }
template <class Real> Var<Real> operator*(double c, Var<Real> a) { return vop1(OpK::Scale, a, c); }
template <class Real> Var<Real> operator+(Var<Real> a, double c) { return vop1(OpK::Scale, a, 1.0, c); }

}  // namespace warpsdf
