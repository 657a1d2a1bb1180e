#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "warpsdf/analytic_scene.hpp"
#include "warpsdf/rng.hpp"
#include "warpsdf/sequence_io.hpp"

using namespace warpsdf;

namespace {

// closed-form ray-sphere intersection (near root), or false on a miss
bool ray_sphere(const Vec3d& o, const Vec3d& d, const Vec3d& c, double R, double& t) {
  Vec3d oc = o - c;
  double b = oc.dot(d);
  double disc = b * b - (oc.squaredNorm() - R * R);
  if (disc < 0) return false;
  t = -b - std::sqrt(disc);
  return t > 0;
}

}  // namespace

TEST_CASE("analytic_sdf") {
  AnalyticScene<double> scene;
  scene.shape = ShapeKind::Sphere;
  scene.radius = 1.0;
  scene.traj = TrajKind::None;

  SECTION("unit sphere values") {
    REQUIRE_THAT(scene.sdf(Vec3d(2, 0, 0), 0.0), Catch::Matchers::WithinAbs(1.0, 1e-14));
    REQUIRE_THAT(scene.sdf(Vec3d(0, 0, 0), 0.0), Catch::Matchers::WithinAbs(-1.0, 1e-14));
  }

  SECTION("translation carries the surface with the center") {
    AnalyticScene<double> s2 = scene;
    s2.traj = TrajKind::Translate;
    s2.amplitude = 0.2;
    s2.frames = 8;
    for (int t = 0; t < 8; ++t) {
      Vec3d c = s2.translation(double(t));
      REQUIRE_THAT(s2.sdf(c + Vec3d(1, 0, 0), double(t)),
                   Catch::Matchers::WithinAbs(0.0, 1e-14));
    }
  }

  SECTION("gradient has unit norm away from the medial axis (all exact shapes)") {
    Rng rng(5);
    for (ShapeKind shape : {ShapeKind::Sphere, ShapeKind::Ellipsoid, ShapeKind::Torus,
                            ShapeKind::TwoSphere}) {
      AnalyticScene<double> s;
      s.shape = shape;
      s.radius = 0.3;
      s.split_base = 0.2;
      int tested = 0;
      for (int trial = 0; trial < 4000 && tested < 400; ++trial) {
        Vec3d p(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7));
        double phi = s.sdf(p, 0.0);
        // keep clear of the medial axis: resample if a nearby kink is plausible
        if (std::abs(phi) < 5e-3) continue;
        if (shape == ShapeKind::Sphere && p.norm() < 5e-3) continue;
        if (shape == ShapeKind::Torus && std::abs(Vec3d(p[0], p[1], 0).norm()) < 5e-3)
          continue;
        if (shape == ShapeKind::TwoSphere && (std::abs(p[0]) < 5e-3 || p.norm() < 5e-3))
          continue;
        if (shape == ShapeKind::Ellipsoid && (phi < 0 || p.cwiseAbs().minCoeff() < 5e-3))
          continue;  // interior medial sheet of an ellipsoid is extended
        double h = 1e-5;
        Vec3d g;
        for (int m = 0; m < 3; ++m) {
          Vec3d pp = p, pm = p;
          pp[m] += h;
          pm[m] -= h;
          g[m] = (s.sdf(pp, 0.0) - s.sdf(pm, 0.0)) / (2 * h);
        }
        REQUIRE_THAT(g.norm(), Catch::Matchers::WithinAbs(1.0, 1e-3));
        ++tested;
      }
      REQUIRE(tested >= 300);
    }
  }
}

TEST_CASE("sphere_trace") {
  AnalyticScene<double> scene;
  scene.shape = ShapeKind::Sphere;
  scene.radius = 1.0;

  SECTION("axial ray hits at depth 2") {
    double t = 0;
    REQUIRE(sphere_trace(scene, Vec3d(0, 0, -3), Vec3d(0, 0, 1), 0.0, 0.0, 10.0, t));
    REQUIRE_THAT(t, Catch::Matchers::WithinAbs(2.0, 1e-5));
  }
  SECTION("ray missing the shape reports a miss") {
    double t = 0;
    REQUIRE_FALSE(
        sphere_trace(scene, Vec3d(0, 3, -3), Vec3d(0, 0, 1), 0.0, 0.0, 10.0, t));
  }
  SECTION("grazing ray within 10x hit_eps of the quadratic-formula depth") {
    double b = 0.999;  // impact parameter as a fraction of the radius
    Vec3d o(b, 0, -3), d(0, 0, 1);
    double t = 0;
    REQUIRE(sphere_trace(scene, o, d, 0.0, 0.0, 10.0, t, 4096, 1e-6));
    double want = 0;
    REQUIRE(ray_sphere(o, d, Vec3d::Zero(), 1.0, want));
    REQUIRE(std::abs(t - want) < 10 * 1e-6 / std::sqrt(1 - b * b) * 0.1 + 1e-5);
  }
  SECTION("traced depth matches the closed form over 1e4 random rays") {
    Rng rng(7);
    AnalyticScene<double> s;
    s.shape = ShapeKind::Sphere;
    s.radius = 0.3;
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
      Vec3d o(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), -2.0);
      Vec3d target(rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), 0.0);
      Vec3d d = (target - o).normalized();
      double want = 0;
      if (!ray_sphere(o, d, Vec3d::Zero(), 0.3, want)) continue;
      // skip extreme grazing incidence where eps/cos blows up
      Vec3d n = (o + want * d).normalized();
      if (std::abs(n.dot(d)) < 0.1) continue;
      double t = 0;
      REQUIRE(sphere_trace(s, o, d, 0.0, 0.0, 10.0, t, 2048, 1e-7));
      REQUIRE(std::abs(t - want) <= 1e-5);
      ++hits;
    }
    REQUIRE(hits > 5000);
  }
}

TEST_CASE("render_gt_frame") {
  AnalyticScene<double> scene;
  scene.shape = ShapeKind::Sphere;
  scene.radius = 0.3;
  scene.traj = TrajKind::None;

  SECTION("center pixel depth equals distance minus radius") {
    Camera<double> cam = default_camera(64);
    // the ray through the exact projection of the center is radial
    double pu, pv, pz;
    REQUIRE(project(cam, Vec3d(0, 0, 0), pu, pv, pz));
    Ray<double> ray = gen_ray(cam, pu, pv, 0);
    double t_hit = 0;
    REQUIRE(sphere_trace(scene, ray.origin, ray.dir, 0.0, 0.0, 10.0, t_hit));
    REQUIRE_THAT(t_hit, Catch::Matchers::WithinAbs(2.0 - 0.3, 1e-4));
    // the rendered pixel containing it sits half a pixel off-axis at most
    Frame fr = render_gt_frame(scene, cam, 0);
    int px = int(pu), py = int(pv);
    REQUIRE(fr.mask_at(px, py));
    REQUIRE_THAT(double(fr.depth_at(px, py)), Catch::Matchers::WithinAbs(2.0 - 0.3, 2e-3));
  }

  SECTION("mask pixel count within 2% of the projected-disk area") {
    // small angular size keeps the pi (f R / d)^2 approximation inside 2%
    AnalyticScene<double> far_scene = scene;
    Camera<double> cam;
    cam.width = cam.height = 256;
    cam.fx = cam.fy = 640;
    cam.cx = cam.cy = 128;
    cam.pose = Mat4<double>::Identity();
    cam.pose(2, 3) = -3.0;
    Frame fr = render_gt_frame(far_scene, cam, 0);
    double count = 0;
    for (std::uint8_t m : fr.mask) count += m;
    double want = kPi * std::pow(cam.fx * 0.3 / 3.0, 2.0);
    REQUIRE(std::abs(count - want) / want < 0.02);
  }

  SECTION("mask is empty outside the projected circle plus one pixel") {
    Camera<double> cam = default_camera(64);
    Frame fr = render_gt_frame(scene, cam, 0);
    // projected silhouette radius uses the tangent-cone geometry
    double d = 2.0;
    double rproj = cam.fx * 0.3 / std::sqrt(d * d - 0.3 * 0.3);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        double du = x + 0.5 - cam.cx, dv = y + 0.5 - cam.cy;
        if (std::sqrt(du * du + dv * dv) > rproj + 1.0) REQUIRE(!fr.mask_at(x, y));
      }
  }

  SECTION("every interior masked pixel's depth matches the closed form (no spikes)") {
    Camera<double> cam = default_camera(64);
    for (int t = 0; t < 3; ++t) {
      AnalyticScene<double> s = scene;
      s.traj = TrajKind::Translate;
      s.amplitude = 0.15;
      Frame fr = render_gt_frame(s, cam, t);
      Vec3d c = s.translation(double(t));
      for (int y = 1; y < 63; ++y)
        for (int x = 1; x < 63; ++x) {
          if (!fr.mask_at(x, y)) continue;
          bool interior = true;
          for (int dy = -1; dy <= 1 && interior; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
              if (!fr.mask_at(x + dx, y + dy)) {
                interior = false;
                break;
              }
          if (!interior) continue;
          Ray<double> ray = gen_ray(cam, x + 0.5, y + 0.5, t);
          double want = 0;
          REQUIRE(ray_sphere(ray.origin, ray.dir, c, 0.3, want));
          REQUIRE(std::abs(double(fr.depth_at(x, y)) - want) < 10 * 1e-5);
        }
    }
  }
}

TEST_CASE("sequence round trip") {
  AnalyticScene<double> scene;
  scene.shape = ShapeKind::Sphere;
  scene.radius = 0.3;
  scene.traj = TrajKind::Translate;
  scene.amplitude = 0.15;
  scene.frames = 8;
  Camera<double> cam = default_camera(64);
  Sequence seq = generate_sequence(scene, cam);
  REQUIRE(seq.count() == 8);

  std::string dir = std::filesystem::temp_directory_path() / "warpsdf_seq_test";
  std::filesystem::remove_all(dir);
  write_sequence(seq, dir);

  SECTION("write then load: rgb within quantization, depth within half a tick, mask exact") {
    Sequence back = load_sequence(dir);
    REQUIRE(back.count() == 8);
    REQUIRE(back.camera.width == 64);
    REQUIRE_THAT(back.camera.fx, Catch::Matchers::WithinAbs(cam.fx, 1e-12));
    for (int t = 0; t < 8; ++t) {
      const Frame& a = seq.frames[std::size_t(t)];
      const Frame& b = back.frames[std::size_t(t)];
      REQUIRE(a.mask == b.mask);
      for (std::size_t i = 0; i < a.depth.size(); ++i)
        REQUIRE(std::abs(double(a.depth[i]) - double(b.depth[i])) <= seq.depth_unit);
      for (std::size_t i = 0; i < a.rgb.size(); ++i)
        REQUIRE(std::abs(double(a.rgb[i]) - double(b.rgb[i])) <= 0.5 / 255.0 + 1e-9);
      // synthetic frames: mask set exactly where depth is valid
      for (std::size_t i = 0; i < b.depth.size(); ++i)
        REQUIRE((b.depth[i] > 0) == (b.mask[i] != 0));
    }
    // loading twice is bit-identical
    Sequence again = load_sequence(dir);
    for (int t = 0; t < 8; ++t) {
      REQUIRE(again.frames[std::size_t(t)].rgb == back.frames[std::size_t(t)].rgb);
      REQUIRE(again.frames[std::size_t(t)].depth == back.frames[std::size_t(t)].depth);
    }
  }

  SECTION("a missing depth frame raises an error naming the frame") {
    std::filesystem::remove(std::string(dir) + "/depth_0003.pgm");
    try {
      load_sequence(dir);
      FAIL("expected error");
    } catch (const Error& e) {
      std::string msg = e.what();
      REQUIRE(msg.find("depth") != std::string::npos);
      REQUIRE(msg.find("3") != std::string::npos);
    }
  }
}
