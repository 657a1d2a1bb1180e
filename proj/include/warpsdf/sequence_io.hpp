#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "warpsdf/analytic_scene.hpp"
#include "warpsdf/camera.hpp"
#include "warpsdf/common.hpp"
#include "warpsdf/pnm.hpp"

namespace warpsdf {

// One RGB-D frame with its foreground mask. Depth is the ray-parameter
// distance in scene units (1 unit = 1 meter on disk); 0 marks invalid pixels.
struct Frame {
  int width = 0, height = 0;
  int index = 0;
  std::vector<float> rgb;    // H*W*3 in [0,1]
  std::vector<float> depth;  // H*W, 0 = invalid
  std::vector<std::uint8_t> mask;

  float depth_at(int x, int y) const { return depth[std::size_t(y) * width + x]; }
  bool mask_at(int x, int y) const { return mask[std::size_t(y) * width + x] != 0; }
  const float* rgb_at(int x, int y) const { return &rgb[(std::size_t(y) * width + x) * 3]; }
};

struct Sequence {
  Camera<double> camera;                 // intrinsics + default pose
  std::vector<Mat4<double>> poses;       // per-frame camera-to-world
  std::vector<Frame> frames;
  double depth_unit = 0.0005;            // scene units per stored depth tick (0.5 mm)

  int count() const { return int(frames.size()); }
};

namespace seqio {
inline std::string frame_name(const std::string& fmt, int idx) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt.c_str(), idx);
  return std::string(buf);
}
constexpr const char* kColorFmt = "color_%04d.ppm";
constexpr const char* kDepthFmt = "depth_%04d.pgm";
constexpr const char* kMaskFmt = "mask_%04d.pgm";
}  // namespace seqio

inline void write_sequence(const Sequence& seq, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["width"] = seq.camera.width;
  meta["height"] = seq.camera.height;
  meta["fx"] = seq.camera.fx;
  meta["fy"] = seq.camera.fy;
  meta["cx"] = seq.camera.cx;
  meta["cy"] = seq.camera.cy;
  meta["frame_count"] = seq.count();
  meta["depth_unit"] = seq.depth_unit;
  meta["color_format"] = seqio::kColorFmt;
  meta["depth_format"] = seqio::kDepthFmt;
  meta["mask_format"] = seqio::kMaskFmt;
  std::vector<double> pose_flat;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) pose_flat.push_back(seq.camera.pose(r, c));
  meta["pose"] = pose_flat;
  if (!seq.poses.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& P : seq.poses) {
      std::vector<double> flat;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) flat.push_back(P(r, c));
      arr.push_back(flat);
    }
    meta["poses"] = arr;
  }
  {
    std::ofstream f(dir + "/meta.json");
    require(f.good(), "write_sequence: cannot write ", dir, "/meta.json");
    f << meta.dump(2) << "\n";
  }
  for (const Frame& fr : seq.frames) {
    ImageU8 rgb;
    rgb.width = fr.width;
    rgb.height = fr.height;
    rgb.channels = 3;
    rgb.data.resize(std::size_t(fr.width) * fr.height * 3);
    for (std::size_t i = 0; i < rgb.data.size(); ++i)
      rgb.data[i] = std::uint8_t(std::lround(clamp01(double(fr.rgb[i])) * 255.0));
    write_ppm(dir + "/" + seqio::frame_name(seqio::kColorFmt, fr.index), rgb);

    ImageU16 d16;
    d16.width = fr.width;
    d16.height = fr.height;
    d16.data.resize(std::size_t(fr.width) * fr.height);
    for (std::size_t i = 0; i < d16.data.size(); ++i) {
      double ticks = double(fr.depth[i]) / seq.depth_unit;
      d16.data[i] = std::uint16_t(std::min(65535.0, std::max(0.0, std::round(ticks))));
    }
    write_pgm16(dir + "/" + seqio::frame_name(seqio::kDepthFmt, fr.index), d16);

    ImageU8 m8;
    m8.width = fr.width;
    m8.height = fr.height;
    m8.channels = 1;
    m8.data.resize(std::size_t(fr.width) * fr.height);
    for (std::size_t i = 0; i < m8.data.size(); ++i) m8.data[i] = fr.mask[i] ? 255 : 0;
    write_pgm8(dir + "/" + seqio::frame_name(seqio::kMaskFmt, fr.index), m8);
  }
}

inline Sequence load_sequence(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(dir + "/meta.json");
  require(f.good(), "load_sequence: missing ", dir, "/meta.json");
  nlohmann::json meta = nlohmann::json::parse(f);

  Sequence seq;
  seq.camera.width = meta.at("width").get<int>();
  seq.camera.height = meta.at("height").get<int>();
  seq.camera.fx = meta.at("fx").get<double>();
  seq.camera.fy = meta.at("fy").get<double>();
  seq.camera.cx = meta.at("cx").get<double>();
  seq.camera.cy = meta.at("cy").get<double>();
  seq.depth_unit = meta.at("depth_unit").get<double>();
  std::vector<double> flat = meta.at("pose").get<std::vector<double>>();
  require(flat.size() == 16, "load_sequence: pose must have 16 entries");
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) seq.camera.pose(r, c) = flat[std::size_t(4 * r + c)];
  seq.camera.validate();
  int n = meta.at("frame_count").get<int>();
  if (meta.contains("poses")) {
    for (const auto& pj : meta.at("poses")) {
      std::vector<double> pf = pj.get<std::vector<double>>();
      require(pf.size() == 16, "load_sequence: per-frame pose must have 16 entries");
      Mat4<double> P;
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) P(r, c) = pf[std::size_t(4 * r + c)];
      seq.poses.push_back(P);
    }
    require(int(seq.poses.size()) == n, "load_sequence: pose count != frame count");
  }
  std::string cfmt = meta.value("color_format", seqio::kColorFmt);
  std::string dfmt = meta.value("depth_format", seqio::kDepthFmt);
  std::string mfmt = meta.value("mask_format", seqio::kMaskFmt);

  for (int t = 0; t < n; ++t) {
    std::string cpath = dir + "/" + seqio::frame_name(cfmt, t);
    std::string dpath = dir + "/" + seqio::frame_name(dfmt, t);
    std::string mpath = dir + "/" + seqio::frame_name(mfmt, t);
    require(fs::exists(cpath), "load_sequence: missing color frame ", t, " (", cpath, ")");
    require(fs::exists(dpath), "load_sequence: missing depth frame ", t, " (", dpath, ")");
    require(fs::exists(mpath), "load_sequence: missing mask frame ", t, " (", mpath, ")");
    ImageU8 rgb = read_ppm(cpath);
    ImageU16 d16 = read_pgm16(dpath);
    ImageU8 m8 = read_pgm8(mpath);
    require(rgb.width == seq.camera.width && rgb.height == seq.camera.height,
            "load_sequence: frame ", t, " size mismatch");
    Frame fr;
    fr.width = rgb.width;
    fr.height = rgb.height;
    fr.index = t;
    fr.rgb.resize(std::size_t(fr.width) * fr.height * 3);
    for (std::size_t i = 0; i < fr.rgb.size(); ++i) fr.rgb[i] = float(rgb.data[i]) / 255.0f;
    fr.depth.resize(std::size_t(fr.width) * fr.height);
    for (std::size_t i = 0; i < fr.depth.size(); ++i)
      fr.depth[i] = float(double(d16.data[i]) * seq.depth_unit);
    fr.mask.resize(std::size_t(fr.width) * fr.height);
    for (std::size_t i = 0; i < fr.mask.size(); ++i) fr.mask[i] = m8.data[i] > 127 ? 1 : 0;
    seq.frames.push_back(std::move(fr));
  }
  return seq;
}

// Renders the analytic scene to a frame: sphere-traced depth/mask, checkered
// Lambert shading with a headlight.
inline Frame render_gt_frame(const AnalyticScene<double>& scene,
                             const Camera<double>& cam, int t) {
  Frame fr;
  fr.width = cam.width;
  fr.height = cam.height;
  fr.index = t;
  fr.rgb.assign(std::size_t(cam.width) * cam.height * 3, 0.f);
  fr.depth.assign(std::size_t(cam.width) * cam.height, 0.f);
  fr.mask.assign(std::size_t(cam.width) * cam.height, 0);
  Aabb<double> box = scene.bounds();
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Ray<double> ray = gen_ray(cam, double(x) + 0.5, double(y) + 0.5, t);
      double t0 = 0, t1 = 0;
      if (!box.intersect(ray.origin, ray.dir, 1e-4, 1e9, t0, t1)) continue;
      double hit = 0;
      if (!sphere_trace(scene, ray.origin, ray.dir, double(t), t0, t1, hit)) continue;
      std::size_t k = std::size_t(y) * cam.width + x;
      fr.depth[k] = float(hit);
      fr.mask[k] = 1;
      Vec3d p = ray.point_at(hit);
      Vec3d n = scene.normal(p, double(t));
      Vec3d l = -ray.dir;  // headlight
      double lam = std::max(0.0, n.dot(l));
      Vec3d alb = scene.albedo_at(p, double(t));
      for (int c = 0; c < 3; ++c) fr.rgb[3 * k + std::size_t(c)] = float(alb[c] * lam);
    }
  return fr;
}

// Default desk-scale synthetic sequence: static camera 2 m back, object at
// the origin.
inline Camera<double> default_camera(int size = 64) {
  Camera<double> cam;
  cam.width = cam.height = size;
  cam.fx = cam.fy = double(size);
  cam.cx = cam.cy = double(size) / 2.0;
  cam.pose = Mat4<double>::Identity();
  cam.pose(2, 3) = -2.0;
  return cam;
}

inline Sequence generate_sequence(const AnalyticScene<double>& scene,
                                  const Camera<double>& cam) {
  Sequence seq;
  seq.camera = cam;
  for (int t = 0; t < scene.frames; ++t)
    seq.frames.push_back(render_gt_frame(scene, cam, t));
  return seq;
}

}  // namespace warpsdf
