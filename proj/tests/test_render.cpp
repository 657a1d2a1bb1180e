#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "warpsdf/camera.hpp"
#include "warpsdf/renderer.hpp"
#include "warpsdf/rng.hpp"
#include "warpsdf/sampling.hpp"
#include "warpsdf/scene_model.hpp"
#include "warpsdf/sphere_init.hpp"
#include "warpsdf/volume.hpp"

using namespace warpsdf;

namespace {

struct MidpointRng {
  double uniform() { return 0.5; }
};

struct SphereFixture {
  SceneModel<double> model;
  double radius = 0.25;

  SphereFixture() {
    Rng rng(101);
    ModelConfig c;
    c.grid_res = 21;
    c.grid_max_res = 84;
    c.n_frames = 2;
    c.ambient_dim = 2;
    c.z_dim = 8;
    c.a_dim = 4;
    c.pe_bands = 4;
    c.deform_hidden = 16;
    c.deform_depth = 2;
    c.deform_skip = 1;
    c.decoder_hidden = 64;
    model.cfg = c;
    model.init(rng);
    SphereInitConfig<double> sc;
    sc.radius = radius;
    sphere_init(model, sc, rng);
  }
};

const SphereFixture& sphere_fixture() {
  static SphereFixture f;
  return f;
}

Camera<double> test_camera() {
  Camera<double> cam;
  cam.width = cam.height = 64;
  cam.fx = cam.fy = 64;
  cam.cx = cam.cy = 32;
  cam.pose = Mat4<double>::Identity();
  cam.pose(2, 3) = -2.0;
  cam.validate();
  return cam;
}

}  // namespace

TEST_CASE("gen_ray") {
  Camera<double> cam = test_camera();
  SECTION("principal point looks down +z") {
    Ray<double> r = gen_ray(cam, 32.0, 32.0);
    REQUIRE((r.dir - Vec3d(0, 0, 1)).norm() < 1e-15);
    REQUIRE(r.origin == Vec3d(0, 0, -2));
  }
  SECTION("u = cx + fx gives a direction proportional to (1,0,1)") {
    Camera<double> wide = cam;
    wide.width = 128;
    Ray<double> r = gen_ray(wide, 32.0 + 64.0, 32.0);
    Vec3d want = Vec3d(1, 0, 1).normalized();
    REQUIRE((r.dir - want).norm() < 1e-15);
  }
  SECTION("projection round trip within 1e-6 px") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      double u = rng.uniform(0.0, 64.0), v = rng.uniform(0.0, 64.0);
      Ray<double> r = gen_ray(cam, u, v);
      double d = rng.uniform(0.5, 5.0);
      double pu, pv, pz;
      REQUIRE(project(cam, r.point_at(d), pu, pv, pz));
      REQUIRE_THAT(pu, Catch::Matchers::WithinAbs(u, 1e-6));
      REQUIRE_THAT(pv, Catch::Matchers::WithinAbs(v, 1e-6));
    }
  }
  SECTION("out-of-image pixel raises") {
    REQUIRE_THROWS_AS(gen_ray(cam, -1.0, 5.0), Error);
    REQUIRE_THROWS_AS(gen_ray(cam, 5.0, 64.0), Error);
  }
}

TEST_CASE("stratified_sample") {
  SECTION("64 depths, one per stratum, all inside [near, far]") {
    Rng rng(7);
    auto d = stratified_sample(1.0, 3.0, 64, rng);
    REQUIRE(d.size() == 64);
    double step = 2.0 / 64;
    for (int i = 0; i < 64; ++i) {
      REQUIRE(d[std::size_t(i)] >= 1.0 + i * step);
      REQUIRE(d[std::size_t(i)] <= 1.0 + (i + 1) * step);
    }
    for (std::size_t i = 1; i < d.size(); ++i) REQUIRE(d[i] > d[i - 1]);
  }
  SECTION("degenerate generator returns exact stratum midpoints") {
    MidpointRng rng;
    auto d = stratified_sample(0.0, 1.0, 4, rng);
    REQUIRE_THAT(d[0], Catch::Matchers::WithinAbs(0.125, 1e-15));
    REQUIRE_THAT(d[1], Catch::Matchers::WithinAbs(0.375, 1e-15));
    REQUIRE_THAT(d[2], Catch::Matchers::WithinAbs(0.625, 1e-15));
    REQUIRE_THAT(d[3], Catch::Matchers::WithinAbs(0.875, 1e-15));
  }
}

TEST_CASE("importance_sample") {
  SECTION("final count is 64 + 4 x 16 = 128") {
    Rng rng(9);
    auto base = stratified_sample(0.0, 2.0, 64, rng);
    auto merged = importance_sample(
        base, [](double) { return 1.0; }, 10.0, 16, 4, 0.01, rng, 0.0, 2.0);
    REQUIRE(merged.size() == 128);
    for (std::size_t i = 1; i < merged.size(); ++i) REQUIRE(merged[i] > merged[i - 1]);
  }

  SECTION("near-delta weights concentrate at least 90% of new samples") {
    Rng rng(11);
    auto base = stratified_sample(0.0, 2.0, 64, rng);
    // sharp zero crossing at depth 1.0
    auto phi = [](double d) { return 1.0 - d; };
    auto merged = importance_sample(base, phi, 500.0, 16, 4, 0.01, rng, 0.0, 2.0);
    int added = int(merged.size()) - 64;
    int close = 0;
    for (double d : merged)
      if (std::abs(d - 1.0) < 0.08) ++close;
    // at most a couple of the base samples sit that close already
    REQUIRE(close - 3 >= int(0.9 * added));
  }

  SECTION("all-zero weights fall back to uniform (chi-square sanity)") {
    Rng rng(13);
    std::vector<double> counts(20, 0.0);
    int total = 0;
    for (int rep = 0; rep < 700; ++rep) {
      auto base = stratified_sample(0.0, 1.0, 16, rng);
      auto merged = importance_sample(
          base, [](double) { return 5.0; } /* constant phi -> zero alphas */, 10.0, 16,
          4, 0.01, rng, 0.0, 1.0);
      // count only the added samples
      std::vector<double> added;
      std::size_t bi = 0;
      for (double d : merged) {
        if (bi < base.size() && d == base[bi]) {
          ++bi;
          continue;
        }
        added.push_back(d);
      }
      for (double d : added) {
        int bin = std::min(19, int(d * 20));
        counts[std::size_t(bin)] += 1;
        ++total;
      }
    }
    double expect = double(total) / 20.0;
    double chi2 = 0;
    for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // chi-square 0.99 quantile at 19 dof: reject uniformity only above this
    REQUIRE(chi2 < 36.19);
  }
}

TEST_CASE("alpha_from_sdf") {
  SECTION("equal SDF values give zero opacity") {
    REQUIRE(alpha_from_sdf(0.2, 0.2, 10.0) == 0.0);
  }
  SECTION("increasing SDF (moving away) gives zero opacity") {
    REQUIRE(alpha_from_sdf(0.1, 0.3, 10.0) == 0.0);
  }
  SECTION("worked example: phi 0.1 -> -0.1 at lambda 10") {
    double want = (sigmoid(1.0) - sigmoid(-1.0)) / sigmoid(1.0);  // 0.63212055883
    REQUIRE_THAT(alpha_from_sdf(0.1, -0.1, 10.0), Catch::Matchers::WithinAbs(want, 1e-12));
    REQUIRE_THAT(want, Catch::Matchers::WithinAbs(0.6321, 1e-4));
  }
  SECTION("monotone non-decreasing in lambda for a fixed crossing") {
    double prev = -1;
    for (double lam = 0.5; lam < 400; lam *= 1.3) {
      double a = alpha_from_sdf(0.05, -0.02, lam);
      REQUIRE(a >= prev - 1e-15);
      prev = a;
    }
  }
}

TEST_CASE("composite_ray") {
  RaySampleSet<double> s;
  SECTION("single opaque sample dominates") {
    s.depth = {1.5};
    s.phi = {0.0};
    s.alpha = {1.0};
    s.T = {1.0};
    s.weight = {1.0};
    s.color = {Vec3d(0.2, 0.4, 0.6)};
    auto r = composite_ray(s);
    REQUIRE(r.rgb == Vec3d(0.2, 0.4, 0.6));
    REQUIRE(r.depth == 1.5);
    REQUIRE(r.mask == 1.0);
  }
  SECTION("fully transparent ray composites to zero") {
    s.depth = {1.0, 2.0};
    s.phi = {1.0, 1.0};
    s.alpha = {0.0, 0.0};
    s.T = {1.0, 1.0};
    s.weight = {0.0, 0.0};
    s.color = {Vec3d(1, 1, 1), Vec3d(1, 1, 1)};
    auto r = composite_ray(s);
    REQUIRE(r.rgb == Vec3d(0, 0, 0));
    REQUIRE(r.depth == 0.0);
    REQUIRE(r.mask == 0.0);
  }
  SECTION("two samples, hand-computed weights") {
    s.depth = {1.0, 2.0};
    s.phi = {0, 0};
    s.alpha = {0.5, 1.0};
    s.T.clear();
    s.weight.clear();
    double T = 1;
    for (double a : s.alpha) {
      s.T.push_back(T);
      s.weight.push_back(T * a);
      T *= 1 - a;
    }
    s.color = {Vec3d(1, 0, 0), Vec3d(0, 1, 0)};
    auto r = composite_ray(s);
    REQUIRE(r.rgb == Vec3d(0.5, 0.5, 0));
    REQUIRE_THAT(r.depth, Catch::Matchers::WithinAbs(1.5, 1e-15));
    REQUIRE_THAT(r.mask, Catch::Matchers::WithinAbs(1.0, 1e-15));
  }
}

TEST_CASE("ray sample invariants over random SDF profiles") {
  Rng rng(17);
  for (int trial = 0; trial < 10000; ++trial) {
    int n = 8 + rng.uniform_int(24);
    RaySampleSet<double> s;
    s.depth.resize(std::size_t(n));
    s.phi.resize(std::size_t(n));
    double d = rng.uniform(0.1, 1.0);
    double phi = rng.uniform(-0.5, 0.5);
    for (int i = 0; i < n; ++i) {
      d += rng.uniform(0.01, 0.1);
      phi += rng.normal() * 0.2;
      s.depth[std::size_t(i)] = d;
      s.phi[std::size_t(i)] = phi;
    }
    double lam = rng.uniform(0.5, 200.0);
    fill_weights(s, lam);
    double wsum = 0;
    for (int i = 0; i < n; ++i) {
      REQUIRE(s.alpha[std::size_t(i)] >= 0.0);
      REQUIRE(s.alpha[std::size_t(i)] <= 1.0);
      if (i > 0) REQUIRE(s.T[std::size_t(i)] <= s.T[std::size_t(i - 1)] + 1e-15);
      wsum += s.weight[std::size_t(i)];
    }
    REQUIRE(s.T[0] == 1.0);
    REQUIRE(wsum <= 1.0 + 1e-6);
  }
}

TEST_CASE("peak weight lands at the SDF zero crossing for sharp lambda") {
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    // clean front-facing crossing: phi decreasing through 0
    int n = 64;
    double spacing = 0.02;
    double cross = rng.uniform(0.3, 0.9);
    RaySampleSet<double> s;
    for (int i = 0; i < n; ++i) {
      double d = 0.1 + i * spacing;
      s.depth.push_back(d);
      s.phi.push_back(cross - d);
    }
    double lam = 20.0 / spacing;  // lambda * spacing >= 20
    fill_weights(s, lam);
    int argmax = 0;
    for (int i = 1; i < n; ++i)
      if (s.weight[std::size_t(i)] > s.weight[std::size_t(argmax)]) argmax = i;
    REQUIRE(std::abs(s.depth[std::size_t(argmax)] - cross) <= spacing + 1e-12);
  }
}

TEST_CASE("render_ray on the sphere-initialized model") {
  const SphereFixture& fx = sphere_fixture();
  Camera<double> cam = test_camera();
  RenderOptions<double> opt;
  opt.n_uniform = 32;
  opt.imp_rounds = 4;
  opt.imp_per_round = 8;
  Aabb<double> box;
  box.lo = Vec3d(-0.55, -0.55, -0.55);
  box.hi = Vec3d(0.55, 0.55, 0.55);

  SECTION("central ray's depth lands within two cells of the analytic hit") {
    Ray<double> ray = gen_ray(cam, 32.0, 32.0);
    REQUIRE(ray_box_near_far(box, ray, 0.05));
    Rng rng(mix_seed(5, 0, 0));
    RaySampleSet<double> samples;
    RayRender<double> r = render_ray(fx.model, ray, 0, opt, rng, &samples);
    double analytic = 2.0 - fx.radius;
    double cell = fx.model.grid.spacing;
    REQUIRE(std::abs(r.depth / std::max(r.mask, 1e-9) - analytic) < 2 * cell);
    REQUIRE(r.mask > 0.5);
    // sample set invariants hold on the real pipeline too
    double wsum = 0;
    for (std::size_t i = 1; i < samples.size(); ++i) {
      REQUIRE(samples.depth[i] > samples.depth[i - 1]);
      REQUIRE(samples.T[i] <= samples.T[i - 1] + 1e-15);
    }
    for (std::size_t i = 0; i < samples.size(); ++i) wsum += samples.weight[i];
    REQUIRE(wsum <= 1.0 + 1e-6);
  }

  SECTION("ray missing the sphere accumulates almost no mask") {
    Ray<double> ray = gen_ray(cam, 62.5, 62.5);  // corner, misses the object
    if (ray_box_near_far(box, ray, 0.05)) {
      Rng rng(mix_seed(5, 1, 0));
      RayRender<double> r = render_ray(fx.model, ray, 0, opt, rng);
      REQUIRE(r.mask < 0.05);
    }
  }

  SECTION("identical seed renders bit-identically") {
    Ray<double> ray = gen_ray(cam, 30.0, 33.0);
    REQUIRE(ray_box_near_far(box, ray, 0.05));
    Rng r1(mix_seed(42, 7, 0)), r2(mix_seed(42, 7, 0));
    RayRender<double> a = render_ray(fx.model, ray, 0, opt, r1);
    RayRender<double> b = render_ray(fx.model, ray, 0, opt, r2);
    REQUIRE(a.rgb == b.rgb);
    REQUIRE(a.depth == b.depth);
    REQUIRE(a.mask == b.mask);
  }
}

TEST_CASE("rendered color gradients w.r.t. grid features match finite differences") {
  Rng rng(23);
  SceneModel<double> model;
  ModelConfig c;
  c.grid_res = 8;
  c.grid_max_res = 32;
  c.n_frames = 1;
  c.ambient_dim = 2;
  c.z_dim = 4;
  c.a_dim = 3;
  c.pe_bands = 2;
  c.deform_hidden = 8;
  c.deform_depth = 2;
  c.deform_skip = 1;
  c.decoder_hidden = 16;
  model.cfg = c;
  model.init(rng);
  // non-trivial deformation head
  for (auto& w : model.store.block(model.deform_def.w_blocks.back()).v) w = rng.normal() * 0.05;

  Camera<double> cam = test_camera();
  Aabb<double> box;
  box.lo = Vec3d(-0.55, -0.55, -0.55);
  box.hi = Vec3d(0.55, 0.55, 0.55);

  LossConfig lc;
  lc.eps_trunc = 0.1;
  std::array<double, 7> eff_w = {1, 1, 1, 1, 1, 1, 1};
  BatchNormalizers norm{2, 2, 2};
  RenderOptions<double> opt;

  std::vector<TrainRay<double>> rays;
  Rng rr(31);
  for (int k = 0; k < 2; ++k) {
    TrainRay<double> tr;
    tr.ray = gen_ray(cam, 30.0 + k, 32.0);
    REQUIRE(ray_box_near_far(box, tr.ray, 0.05));
    tr.rgb_gt = Vec3d(0.4, 0.5, 0.6);
    tr.depth_gt = 1.8;
    tr.mask_gt = 1.0;
    tr.depths = stratified_sample(tr.ray.near, tr.ray.far, 12, rr);
    tr.smooth_delta = Vec3d(0.01, -0.005, 0.004);
    rays.push_back(tr);
  }

  Tape<double> tp(&model.store);
  auto chunk = build_chunk_graph(tp, model, rays, 0, lc, eff_w, norm, 0.08, opt);
  GradSink<double> sink(&model.store);
  tp.backward(chunk.total_node, &sink, true);
  auto grads = make_zero_gradient(model.store);
  sink.merge_into(grads);

  auto loss_value = [&]() {
    tp.replay_forward();
    return double(tp.value(chunk.total_node));
  };
  auto& gv = model.store.block(model.grid.block).v;
  Rng pick(37);
  int tested = 0;
  for (int probe = 0; probe < 200 && tested < 25; ++probe) {
    std::size_t i = std::size_t(pick.uniform_int(int(gv.size())));
    if (grads[std::size_t(model.grid.block)][i] == 0.0) continue;  // untouched cell
    double h = 1e-6, keep = gv[i];
    gv[i] = keep + h;
    double fp = loss_value();
    gv[i] = keep - h;
    double fm = loss_value();
    gv[i] = keep;
    loss_value();
    double want = (fp - fm) / (2 * h);
    REQUIRE_THAT(grads[std::size_t(model.grid.block)][i],
                 Catch::Matchers::WithinAbs(want, 1e-3 * (1 + std::abs(want))));
    ++tested;
  }
  REQUIRE(tested >= 10);
}
