#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "warpsdf/adam.hpp"
#include "warpsdf/dual3.hpp"
#include "warpsdf/finite_diff.hpp"
#include "warpsdf/params.hpp"
#include "warpsdf/quaternion.hpp"
#include "warpsdf/rng.hpp"
#include "warpsdf/tape.hpp"
#include "warpsdf/tape_math.hpp"
#include "warpsdf/feature_grid.hpp"
#include "warpsdf/posenc.hpp"

using namespace warpsdf;

namespace {

using Tp = Tape<double>;

double fd_of(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

struct UnaryCase {
  OpK k;
  double lo, hi;
  double c0 = 0, c1 = 0;
};

}  // namespace

TEST_CASE("scalar tape basics match hand derivatives") {
  ParamStore<double> store;
  GradSink<double> sink(&store);

  SECTION("f(x) = x*x at x = 3 gives df/dx = 6") {
    Tp tp(&store);
    auto x = make_var(tp, 3.0);
    auto y = x * x;
    REQUIRE(y.value() == 9.0);
    tp.backward(y.id, &sink);
    REQUIRE(tp.adjoint(x.id) == 6.0);
  }

  SECTION("f(x,y) = x+y has gradient (1,1)") {
    Tp tp(&store);
    auto x = make_var(tp, 1.25);
    auto y = make_var(tp, -7.5);
    auto s = x + y;
    tp.backward(s.id, &sink);
    REQUIRE(tp.adjoint(x.id) == 1.0);
    REQUIRE(tp.adjoint(y.id) == 1.0);
  }

  SECTION("unreachable leaves get zero gradient") {
    Tp tp(&store);
    auto x = make_var(tp, 2.0);
    auto z = make_var(tp, 5.0);
    auto y = x * x;
    tp.backward(y.id, &sink);
    REQUIRE(tp.adjoint(z.id) == 0.0);
  }
}

TEST_CASE("every elementwise op matches central differences on random points") {
  // >= 100 random points per op in its open domain, relative tolerance 1e-4.
  std::vector<UnaryCase> unary = {
      {OpK::Copy, -3, 3},       {OpK::Neg, -3, 3},
      {OpK::Abs, 0.1, 3},       {OpK::Abs, -3, -0.1},
      {OpK::SqrtG, 0.05, 4},    {OpK::Exp, -3, 3},
      {OpK::Log, 0.1, 5},       {OpK::Sin, -3, 3},
      {OpK::Cos, -3, 3},        {OpK::Sigmoid, -5, 5},
      {OpK::Softplus, -5, 5},   {OpK::Square, -3, 3},
      {OpK::Relu, 0.05, 3},     {OpK::Relu, -3, -0.05},
      {OpK::CosSq, 1e-6, 9},    {OpK::SincSq, 1e-6, 9},
      {OpK::SincSqD, 1e-6, 9},  {OpK::Scale, -3, 3, 1.7, -0.3},
      {OpK::Clamp, -2, 2, -0.5, 0.5},
      {OpK::MaxC, -2, 2, 0.3},  {OpK::MinC, -2, 2, 0.3},
  };
  ParamStore<double> store;
  GradSink<double> sink(&store);
  Rng rng(17);
  for (const auto& c : unary) {
    for (int trial = 0; trial < 100; ++trial) {
      double x0 = rng.uniform(c.lo, c.hi);
      // skip points too close to a kink of the piecewise ops
      if ((c.k == OpK::Clamp || c.k == OpK::MaxC || c.k == OpK::MinC) &&
          (std::abs(x0 - c.c0) < 1e-3 || std::abs(x0 - c.c1) < 1e-3))
        continue;
      Tp tp(&store);
      auto x = make_var(tp, x0);
      auto y = vop1(c.k, x, c.c0, c.c1);
      tp.backward(y.id, &sink);
      double got = tp.adjoint(x.id);
      double want = fd_of(
          [&](double v) {
            Tp t2(&store);
            auto xv = make_var(t2, v);
            return vop1(c.k, xv, c.c0, c.c1).value();
          },
          x0, 1e-6);
      INFO(op_name(c.k) << " at " << x0);
      REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 1e-4 * (1 + std::abs(want))));
    }
  }

  std::vector<OpK> binary = {OpK::Add, OpK::Sub, OpK::Mul, OpK::Div, OpK::Max2, OpK::Min2};
  for (OpK k : binary) {
    for (int trial = 0; trial < 100; ++trial) {
      double a0 = rng.uniform(-3, 3), b0 = rng.uniform(-3, 3);
      if (k == OpK::Div && std::abs(b0) < 0.2) b0 += 0.5;
      if ((k == OpK::Max2 || k == OpK::Min2) && std::abs(a0 - b0) < 1e-3) continue;
      Tp tp(&store);
      auto a = make_var(tp, a0);
      auto b = make_var(tp, b0);
      auto y = vop(k, a, b);
      tp.backward(y.id, &sink);
      auto eval = [&](double av, double bv) {
        Tp t2(&store);
        return vop(k, make_var(t2, av), make_var(t2, bv)).value();
      };
      double wa = fd_of([&](double v) { return eval(v, b0); }, a0);
      double wb = fd_of([&](double v) { return eval(a0, v); }, b0);
      INFO(op_name(k) << " at (" << a0 << ", " << b0 << ")");
      REQUIRE_THAT(tp.adjoint(a.id), Catch::Matchers::WithinAbs(wa, 1e-4 * (1 + std::abs(wa))));
      REQUIRE_THAT(tp.adjoint(b.id), Catch::Matchers::WithinAbs(wb, 1e-4 * (1 + std::abs(wb))));
    }
  }
}

TEST_CASE("series primitives agree with closed forms across the switch point") {
  for (double s : {1e-8, 1e-5, 9e-4, 1.1e-3, 0.01, 0.5, 4.0}) {
    double q = std::sqrt(s);
    REQUIRE_THAT(cos_sq(s), Catch::Matchers::WithinAbs(std::cos(q), 1e-12));
    REQUIRE_THAT(sinc_sq(s), Catch::Matchers::WithinAbs(std::sin(q) / q, 1e-12));
    double h = std::max(1e-9, s * 1e-4);
    REQUIRE_THAT(sinc_sq_d(s),
                 Catch::Matchers::WithinAbs((sinc_sq(s + h) - sinc_sq(s - h)) / (2 * h),
                                            1e-5));
    REQUIRE_THAT(sinc_sq_dd(s),
                 Catch::Matchers::WithinAbs((sinc_sq_d(s + h) - sinc_sq_d(s - h)) / (2 * h),
                                            1e-4));
    REQUIRE_THAT(cos_sq_d(s),
                 Catch::Matchers::WithinAbs((cos_sq(s + h) - cos_sq(s - h)) / (2 * h), 1e-5));
  }
}

TEST_CASE("fused linear layer gradients match finite differences") {
  ParamStore<double> store;
  Rng rng(3);
  int in = 5, out = 4, rows = 7;
  int wb = store.add("W", {out, in});
  int bb = store.add("b", {out});
  for (auto& v : store.block(wb).v) v = rng.normal();
  for (auto& v : store.block(bb).v) v = rng.normal();
  std::vector<double> x(std::size_t(rows * in));
  for (auto& v : x) v = rng.normal();

  auto build = [&](Tp& tp) {
    BatchVar xs = tp.leaf(x.data(), std::uint32_t(x.size()));
    BatchVar y = tp.linear(xs.start, std::uint32_t(rows), 3, in, out, wb, bb);
    // nonlinear head so weight gradients are row-dependent
    BatchVar sq = tp.ew1(OpK::Square, y);
    return tp.sum_all(sq);
  };

  Tp tp(&store);
  BatchVar loss = build(tp);
  GradSink<double> sink(&store);
  tp.backward(loss.start, &sink, true);
  auto grads = make_zero_gradient(store);
  sink.merge_into(grads);

  auto loss_value = [&]() {
    tp.replay_forward();
    return tp.value(loss.start);
  };
  for (int bid : {wb, bb}) {
    auto& v = store.block(bid).v;
    for (std::size_t i = 0; i < v.size(); ++i) {
      double h = 1e-6;
      double keep = v[i];
      v[i] = keep + h;
      double fp = loss_value();
      v[i] = keep - h;
      double fm = loss_value();
      v[i] = keep;
      loss_value();
      double want = (fp - fm) / (2 * h);
      REQUIRE_THAT(grads[std::size_t(bid)][i],
                   Catch::Matchers::WithinAbs(want, 1e-4 * (1 + std::abs(want))));
    }
  }
}

TEST_CASE("segment ops: sums and transmittance") {
  ParamStore<double> store;
  Rng rng(5);
  std::vector<double> alpha(12);
  for (auto& a : alpha) a = rng.uniform(0.0, 0.95);

  Tp tp(&store);
  BatchVar al = tp.leaf(alpha.data(), 12);
  BatchVar T = tp.transmit(al, 4);
  // check forward values
  for (int r = 0; r < 3; ++r) {
    double t = 1;
    for (int i = 0; i < 4; ++i) {
      REQUIRE_THAT(tp.value(T.start + std::uint32_t(r * 4 + i)),
                   Catch::Matchers::WithinAbs(t, 1e-15));
      t *= 1 - alpha[std::size_t(r * 4 + i)];
    }
  }
  BatchVar w = tp.ew2(OpK::Mul, T, al);
  BatchVar s = tp.segsum(w, 4);
  REQUIRE(s.n == 3);
  BatchVar loss = tp.ew1(OpK::Square, tp.sum_all(s));
  GradSink<double> sink(&store);
  tp.backward(loss.start, &sink, true);

  for (std::size_t i = 0; i < alpha.size(); ++i) {
    double h = 1e-7;
    auto eval = [&](double v) {
      double keep = alpha[i];
      alpha[i] = v;
      Tp t2(&store);
      BatchVar a2 = t2.leaf(alpha.data(), 12);
      BatchVar T2 = t2.transmit(a2, 4);
      BatchVar w2 = t2.ew2(OpK::Mul, T2, a2);
      BatchVar l2 = t2.ew1(OpK::Square, t2.sum_all(t2.segsum(w2, 4)));
      alpha[i] = keep;
      return t2.value(l2.start);
    };
    double want = (eval(alpha[i] + h) - eval(alpha[i] - h)) / (2 * h);
    REQUIRE_THAT(tp.adjoint(al.start + std::uint32_t(i)),
                 Catch::Matchers::WithinAbs(want, 1e-4 * (1 + std::abs(want))));
  }

  SECTION("transmittance backward handles alpha = 1 (division-free)") {
    std::vector<double> a1 = {0.3, 1.0, 0.5, 0.2};
    Tp t3(&store);
    BatchVar av = t3.leaf(a1.data(), 4);
    BatchVar T3 = t3.transmit(av, 4);
    BatchVar l3 = t3.sum_all(T3);
    GradSink<double> s3(&store);
    t3.backward(l3.start, &s3, true);
    for (int i = 0; i < 4; ++i)
      REQUIRE(std::isfinite(t3.adjoint(av.start + std::uint32_t(i))));
  }
}

TEST_CASE("backward is deterministic: two sweeps produce bit-identical gradients") {
  ParamStore<double> store;
  Rng rng(11);
  int wb = store.add("W", {6, 6});
  int bb = store.add("b", {6});
  for (auto& v : store.block(wb).v) v = rng.normal();
  for (auto& v : store.block(bb).v) v = rng.normal();
  std::vector<double> x(36);
  for (auto& v : x) v = rng.normal();

  Tp tp(&store);
  BatchVar xs = tp.leaf(x.data(), 36);
  BatchVar y = tp.linear(xs.start, 6, 6, 6, 6, wb, bb);
  BatchVar z = tp.ew1(OpK::Softplus, y);
  BatchVar loss = tp.sum_all(z);

  GradSink<double> s1(&store), s2(&store);
  tp.backward(loss.start, &s1);
  auto g1 = make_zero_gradient(store);
  s1.merge_into(g1);
  tp.backward(loss.start, &s2);
  auto g2 = make_zero_gradient(store);
  s2.merge_into(g2);
  REQUIRE(g1 == g2);
}

TEST_CASE("finite_diff_grad oracle") {
  SECTION("f(x) = x^2 at 3 with h = 1e-4 gives 6 within 1e-7") {
    auto g = finite_diff_grad([](const std::vector<double>& v) { return v[0] * v[0]; },
                              {3.0}, 1e-4);
    REQUIRE_THAT(g[0], Catch::Matchers::WithinAbs(6.0, 1e-7));
  }
  SECTION("constant function has zero gradient") {
    auto g = finite_diff_grad([](const std::vector<double>&) { return 4.2; },
                              {1.0, -2.0, 0.5}, 1e-5);
    for (double gi : g) REQUIRE(gi == 0.0);
  }
  SECTION("free-space penalty active branch: d/dphi e^{-a phi} - 1 at phi = -0.1") {
    double a = 5.0;
    auto f = [&](const std::vector<double>& v) {
      return std::max({0.0, std::exp(-a * v[0]) - 1.0, v[0] - 1.0});
    };
    auto g = finite_diff_grad(f, {-0.1}, 1e-6);
    double analytic = -a * std::exp(-a * -0.1);
    REQUIRE_THAT(g[0], Catch::Matchers::WithinAbs(analytic, 1e-5 * std::abs(analytic)));
  }
  SECTION("non-finite value raises") {
    REQUIRE_THROWS_AS(finite_diff_grad(
                          [](const std::vector<double>& v) {
                            return std::log(v[0]);  // NaN for negative probe
                          },
                          {1e-7}, 1e-5),
                      Error);
  }
}

TEST_CASE("jacobian_fwd") {
  SECTION("identity map gives the identity matrix") {
    auto J = jacobian_fwd<double>(
        [](const std::array<Dual3<double>, 3>& x) { return x; }, Vec3d(0.3, -0.2, 0.9));
    REQUIRE(J.isApprox(Mat3d::Identity(), 1e-15));
  }
  SECTION("fixed linear map A x gives A") {
    Mat3d A;
    A << 1, 2, 3, 4, 5, 6, 7, 8, 10;
    auto map = [&](const std::array<Dual3<double>, 3>& x) {
      std::array<Dual3<double>, 3> y;
      for (int i = 0; i < 3; ++i)
        y[std::size_t(i)] =
            A(i, 0) * x[0] + A(i, 1) * x[1] + A(i, 2) * x[2];
      return y;
    };
    auto J = jacobian_fwd<double>(map, Vec3d(0.1, 0.2, 0.3));
    REQUIRE(J.isApprox(A, 1e-14));
  }
  SECTION("chain rule: jacobian of composition equals the product") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      Vec3d r1(rng.normal() * 0.5, rng.normal() * 0.5, rng.normal() * 0.5);
      Mat3d A;
      for (int i = 0; i < 9; ++i) A(i / 3, i % 3) = rng.normal();
      Mat3d R = quat_to_matrix(quat_exp_vec(r1));
      auto f = [&](const std::array<Dual3<double>, 3>& x) {
        // A * (R x)
        std::array<Dual3<double>, 3> rx, y;
        for (int i = 0; i < 3; ++i)
          rx[std::size_t(i)] = R(i, 0) * x[0] + R(i, 1) * x[1] + R(i, 2) * x[2];
        for (int i = 0; i < 3; ++i)
          y[std::size_t(i)] = A(i, 0) * rx[0] + A(i, 1) * rx[1] + A(i, 2) * rx[2];
        return y;
      };
      Vec3d x(rng.normal(), rng.normal(), rng.normal());
      auto J = jacobian_fwd<double>(f, x);
      REQUIRE(((J - A * R).cwiseAbs().maxCoeff()) < 1e-10);
    }
  }
  SECTION("matches finite differences on a smooth nonlinear map") {
    auto map_d = [](const std::array<Dual3<double>, 3>& x) {
      std::array<Dual3<double>, 3> y;
      y[0] = sin(x[0]) * x[1];
      y[1] = exp(0.3 * x[2]);
      y[2] = x[0] * x[1] * x[2];
      return y;
    };
    auto map_v = [](const Vec3d& p) {
      return Vec3d(std::sin(p[0]) * p[1], std::exp(0.3 * p[2]), p[0] * p[1] * p[2]);
    };
    Vec3d x(0.4, -0.7, 1.2);
    auto J = jacobian_fwd<double>(map_d, x);
    auto Jfd = finite_diff_jacobian(map_v, x, 1e-5);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        REQUIRE_THAT(J(i, j), Catch::Matchers::WithinAbs(Jfd(i, j),
                                                         1e-5 * (1 + std::abs(J(i, j)))));
  }
}

TEST_CASE("adam_step") {
  AdamHyper h;
  h.lr = 5e-4;
  SECTION("zero gradients leave parameters unchanged and advance t") {
    std::vector<double> p = {1.0, -2.0}, g = {0.0, 0.0};
    AdamState<double> st;
    adam_step(p, g, st, h);
    REQUIRE(p[0] == 1.0);
    REQUIRE(p[1] == -2.0);
    REQUIRE(st.t == 1);
  }
  SECTION("first step with unit gradient moves by about lr") {
    std::vector<double> p = {0.5}, g = {1.0};
    AdamState<double> st;
    adam_step(p, g, st, h);
    // bias-corrected m-hat = 1, v-hat = 1: step = lr / (1 + eps)
    REQUIRE_THAT(0.5 - p[0], Catch::Matchers::WithinAbs(5e-4, 1e-8));
  }
  SECTION("constant gradient: per-step movement bounded by lr") {
    std::vector<double> p = {0.0}, g = {0.7};
    AdamState<double> st;
    double prev = p[0];
    for (int i = 0; i < 10; ++i) {
      adam_step(p, g, st, h);
      REQUIRE(std::abs(p[0] - prev) <= h.lr * (1 + 1e-6));
      prev = p[0];
    }
    REQUIRE(st.t == 10);
    for (double v : st.v) REQUIRE(v >= 0.0);
  }
  SECTION("shape mismatch raises") {
    std::vector<double> p = {0.0}, g = {0.7, 0.1};
    AdamState<double> st;
    REQUIRE_THROWS_AS(adam_step(p, g, st, h), Error);
  }
}

TEST_CASE("fused trilerp kernel: values, tangents and all gradients") {
  ParamStore<double> store;
  Rng rng(31);
  const int N = 4, C = 8, cb = 1, cc = 5;
  int gb = store.add("grid", {N, N, N, C}, true, C);
  for (auto& v : store.block(gb).v) v = rng.normal();
  GridGeom<double> g;
  g.block = gb;
  g.res = N;
  g.channels = C;
  g.origin = Vec3d(-0.5, -0.4, -0.3);
  g.spacing = 0.35;

  const std::uint32_t M = 6;
  std::vector<double> px(M * 3), pt(M * 9), wsum((1 + 3) * M * cc);
  for (auto& v : px) v = rng.uniform(-0.4, 0.4);
  for (auto& v : pt) v = rng.normal();
  for (auto& v : wsum) v = rng.normal();

  auto build = [&](Tp& tp, BatchVar* x_out, BatchVar* t_out) {
    BatchVar x[3], xt[9];
    for (int m = 0; m < 3; ++m) x[m] = tp.leaf(px.data() + m, M, 3);
    for (int m = 0; m < 3; ++m)
      for (int k = 0; k < 3; ++k) xt[3 * m + k] = tp.leaf(pt.data() + 3 * m + k, M, 9);
    std::uint32_t oob = 0;
    BatchVar f = tp.trilerp(g, cb, cc, x, xt, oob);
    BatchVar wts = tp.leaf(wsum.data(), std::uint32_t(wsum.size()));
    BatchVar prod = tp.ew2(OpK::Mul, f, wts);
    if (x_out)
      for (int m = 0; m < 3; ++m) x_out[m] = x[m];
    if (t_out)
      for (int i = 0; i < 9; ++i) t_out[i] = xt[i];
    return std::make_pair(tp.sum_all(prod), f);
  };

  Tp tp(&store);
  BatchVar xv[3], tv[9];
  auto [loss, feats] = build(tp, xv, tv);
  GradSink<double> sink(&store);
  tp.backward(loss.start, &sink, true);
  auto grads = make_zero_gradient(store);
  sink.merge_into(grads);

  SECTION("forward values and tangent rows match the scalar Dual3 path") {
    for (std::uint32_t i = 0; i < M; ++i) {
      using D = Dual3<double>;
      SVec3<D> xd = {D::seed(px[3 * i], 0), D::seed(px[3 * i + 1], 1),
                     D::seed(px[3 * i + 2], 2)};
      D out[cc];
      grid_trilerp(store, g, cb, cc, xd, out);
      for (int j = 0; j < cc; ++j) {
        REQUIRE_THAT(tp.value(feats.start + i * cc + std::uint32_t(j)),
                     Catch::Matchers::WithinAbs(out[j].v, 1e-13));
        for (int k = 0; k < 3; ++k) {
          double want = 0;
          for (int m = 0; m < 3; ++m) want += out[j].t[m] * pt[9 * i + 3 * m + k];
          REQUIRE_THAT(tp.value(feats.start + ((k + 1) * M + i) * cc + std::uint32_t(j)),
                       Catch::Matchers::WithinAbs(want, 1e-12));
        }
      }
    }
  }

  SECTION("grid-value gradients match finite differences") {
    auto loss_value = [&]() {
      tp.replay_forward();
      return tp.value(loss.start);
    };
    auto& v = store.block(gb).v;
    int checked = 0;
    for (std::size_t i = 0; i < v.size() && checked < 60; i += 7, ++checked) {
      double h = 1e-6, keep = v[i];
      v[i] = keep + h;
      double fp = loss_value();
      v[i] = keep - h;
      double fm = loss_value();
      v[i] = keep;
      loss_value();
      double want = (fp - fm) / (2 * h);
      REQUIRE_THAT(grads[std::size_t(gb)][i],
                   Catch::Matchers::WithinAbs(want, 1e-5 * (1 + std::abs(want))));
    }
  }

  SECTION("coordinate and tangent-input gradients match finite differences") {
    auto eval_at = [&](std::vector<double>& vec, std::size_t idx, double v) {
      double keep = vec[idx];
      vec[idx] = v;
      Tp t2(&store);
      auto [l2, f2] = build(t2, nullptr, nullptr);
      (void)f2;
      vec[idx] = keep;
      return t2.value(l2.start);
    };
    for (std::size_t i = 0; i < px.size(); ++i) {
      double h = 1e-6;
      double want = (eval_at(px, i, px[i] + h) - eval_at(px, i, px[i] - h)) / (2 * h);
      double got = tp.adjoint(xv[i % 3].start + std::uint32_t(i / 3));
      REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 2e-4 * (1 + std::abs(want))));
    }
    for (std::size_t i = 0; i < pt.size(); ++i) {
      double h = 1e-6;
      double want = (eval_at(pt, i, pt[i] + h) - eval_at(pt, i, pt[i] - h)) / (2 * h);
      std::uint32_t sample = std::uint32_t(i / 9);
      double got = tp.adjoint(tv[i % 9].start + sample);
      REQUIRE_THAT(got, Catch::Matchers::WithinAbs(want, 2e-4 * (1 + std::abs(want))));
    }
  }

  SECTION("out-of-bounds queries are clamped, flagged, and give zero x-gradient") {
    Tp t2(&store);
    std::vector<double> far = {9.0, 9.0, 9.0};
    BatchVar x[3];
    for (int m = 0; m < 3; ++m) x[m] = t2.leaf(far.data() + m, 1, 3);
    std::uint32_t oob = 0;
    BatchVar f = t2.trilerp(g, cb, cc, x, nullptr, oob);
    REQUIRE(t2.bytes(oob)[0] == 1);
    BatchVar l = t2.sum_all(f);
    GradSink<double> s2(&store);
    t2.backward(l.start, &s2);
    for (int m = 0; m < 3; ++m) REQUIRE(t2.adjoint(x[m].start) == 0.0);
  }
}

TEST_CASE("fused positional encoding matches the scalar path and finite differences") {
  ParamStore<double> store;
  Rng rng(41);
  PosEncConfig pe;
  pe.bands = 4;
  pe.window_alpha = 2.3;
  const std::uint32_t M = 5;
  std::vector<double> xyz(3 * M);
  for (auto& v : xyz) v = rng.uniform(-0.6, 0.6);
  std::vector<double> win(std::size_t(pe.bands));
  posenc_windows(pe, win.data());

  Tp tp(&store);
  BatchVar enc = tp.posenc(xyz.data(), M, pe.bands, win.data(), true);
  const int E = pe.dim();
  for (std::uint32_t i = 0; i < M; ++i) {
    std::vector<double> want(std::size_t(E), 0.0);
    SVec3<double> x = {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
    posenc_eval<double, double>(x, pe, want.data());
    for (int c = 0; c < E; ++c)
      REQUIRE_THAT(tp.value(enc.start + i * std::uint32_t(E) + std::uint32_t(c)),
                   Catch::Matchers::WithinAbs(want[std::size_t(c)], 1e-14));
    // tangent rows = d enc / d x_t via FD
    for (int t = 0; t < 3; ++t) {
      double h = 1e-6;
      SVec3<double> xp = x, xm = x;
      xp[std::size_t(t)] += h;
      xm[std::size_t(t)] -= h;
      std::vector<double> ep(std::size_t(E), 0.0), em(std::size_t(E), 0.0);
      posenc_eval<double, double>(xp, pe, ep.data());
      posenc_eval<double, double>(xm, pe, em.data());
      for (int c = 0; c < E; ++c) {
        double fd = (ep[std::size_t(c)] - em[std::size_t(c)]) / (2 * h);
        REQUIRE_THAT(
            tp.value(enc.start + ((std::uint32_t(t) + 1) * M + i) * std::uint32_t(E) +
                     std::uint32_t(c)),
            Catch::Matchers::WithinAbs(fd, 1e-6 * (1 + std::abs(fd))));
      }
    }
  }
}
