#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "warpsdf/common.hpp"
#include "warpsdf/losses.hpp"
#include "warpsdf/scene_model.hpp"

namespace warpsdf {

// Every training knob. Defaults are the full-scale settings; preset("desk")
// shrinks resolutions, counts and capacity for CPU-scale runs without
// touching the algorithm.
struct TrainConfig {
  std::string preset = "full";

  std::int64_t steps = 80000;
  int rays_per_batch = 1024;
  int n_uniform = 64;
  int imp_rounds = 4;
  int imp_per_round = 16;
  double imp_floor = 0.01;

  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  int grid_res = 35;
  int grid_max_res = 140;
  double upsample_frac1 = 0.3;
  double upsample_frac2 = 0.6;
  double box_size = 1.1;
  double box_cx = 0.0, box_cy = 0.0, box_cz = 0.0;

  int pe_bands = 6;
  double pe_ramp_frac = 0.4;
  int ambient_dim = 2;
  int z_dim = 64;
  int a_dim = 32;
  double code_sigma = 0.01;
  int deform_hidden = 128;
  int deform_depth = 6;
  int deform_skip = 4;
  int decoder_hidden = 64;
  int decoder_depth = 2;
  bool color_gets_ambient = false;
  bool two_grids = false;
  std::string deform_variant = "se3";
  double lambda_init = -1.0;

  double w_rgb = 10.0, w_depth = 1.0, w_sdf = 10.0, w_fs = 1.0;
  double w_eik = 0.1, w_smooth = 0.1, w_mask = 0.1;
  double eps_trunc = -1.0;  // auto: 2.5 cells at the finest resolution
  double alpha_fs = 5.0;
  double delta_std = -1.0;  // auto: 0.01 * box_size
  double sched_start = 2.0;
  double sched_frac = 0.25;
  std::string eikonal_space = "observed";
  bool extrapolate_last_alpha = false;

  std::string ray_sampling = "masked";  // masked | uniform
  int mask_band_px = 8;

  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency
  int chunk_rays = 8;
  std::int64_t checkpoint_every = 1000;
  std::int64_t log_every = 10;
  std::int64_t debug_render_every = 0;  // 0 = off
  int debug_frame = 0;
  std::string precision = "f64";  // f64 | f32

  double sphere_init_radius_frac = 0.5;
  int sphere_init_steps = 800;
  double sphere_init_tol = 0.002;

  void apply_preset(const std::string& name) {
    if (name == "full") {
      *this = TrainConfig{};
      return;
    }
    require(name == "desk", "unknown preset: ", name);
    *this = TrainConfig{};
    preset = "desk";
    steps = 3000;
    rays_per_batch = 512;
    n_uniform = 32;
    imp_per_round = 8;
    grid_res = 24;
    grid_max_res = 96;
    pe_bands = 4;
    z_dim = 16;
    a_dim = 8;
    deform_hidden = 48;
    deform_depth = 2;
    deform_skip = 1;
    checkpoint_every = 1000;
    debug_render_every = 0;
  }

  double finest_cell() const {
    int finest = grid_res;
    if (upsample_frac2 < 1.0) finest = grid_res * 4;
    else if (upsample_frac1 < 1.0) finest = grid_res * 2;
    if (finest > grid_max_res) finest = grid_max_res;
    return box_size / double(finest - 1);
  }

  double eps_trunc_value() const {
    return eps_trunc > 0 ? eps_trunc : 2.5 * finest_cell();
  }
  double delta_std_value() const {
    return delta_std > 0 ? delta_std : 0.01 * box_size;
  }

  LossConfig loss_config() const {
    LossConfig lc;
    lc.w_rgb = w_rgb;
    lc.w_depth = w_depth;
    lc.w_sdf = w_sdf;
    lc.w_fs = w_fs;
    lc.w_eik = w_eik;
    lc.w_smooth = w_smooth;
    lc.w_mask = w_mask;
    lc.eps_trunc = eps_trunc_value();
    lc.alpha_fs = alpha_fs;
    lc.delta_std = delta_std_value();
    lc.sched_start = sched_start;
    lc.sched_frac = sched_frac;
    lc.eikonal_canonical = eikonal_space == "canonical";
    lc.validate();
    return lc;
  }

  ModelConfig model_config(int n_frames) const {
    ModelConfig mc;
    double half = box_size / 2.0;
    mc.box_lo = Vec3d(box_cx - half, box_cy - half, box_cz - half);
    mc.box_hi = Vec3d(box_cx + half, box_cy + half, box_cz + half);
    mc.grid_res = grid_res;
    mc.grid_max_res = grid_max_res;
    mc.two_grids = two_grids;
    mc.n_frames = n_frames;
    mc.ambient_dim = ambient_dim;
    mc.z_dim = z_dim;
    mc.a_dim = a_dim;
    mc.code_sigma = code_sigma;
    mc.pe_bands = pe_bands;
    mc.deform_hidden = deform_hidden;
    mc.deform_depth = deform_depth;
    mc.deform_skip = deform_skip;
    mc.decoder_hidden = decoder_hidden;
    mc.decoder_depth = decoder_depth;
    mc.color_gets_ambient = color_gets_ambient;
    mc.deform_variant = deform_variant_from(deform_variant);
    mc.lambda_init = lambda_init;
    return mc;
  }

  void validate() const {
    require(steps > 0 && rays_per_batch > 0 && n_uniform >= 2, "config: bad counts");
    require(imp_rounds >= 0 && imp_per_round >= 0, "config: bad importance counts");
    require(samples_per_ray() > 0, "config: samples per ray must be positive");
    require(precision == "f64" || precision == "f32", "config: precision must be f64 or f32");
    require(ray_sampling == "masked" || ray_sampling == "uniform",
            "config: ray_sampling must be masked or uniform");
    require(eikonal_space == "observed" || eikonal_space == "canonical",
            "config: eikonal_space must be observed or canonical");
    require(upsample_frac1 <= upsample_frac2, "config: upsample fractions out of order");
    loss_config();
  }

  int samples_per_ray() const { return n_uniform + imp_rounds * imp_per_round; }
};

// Single field table: JSON load/save, CLI flags, and the config hash all walk
// the same list.
template <class V>
void visit_fields(TrainConfig& c, V&& v) {
  v("preset", c.preset);
  v("steps", c.steps);
  v("rays_per_batch", c.rays_per_batch);
  v("n_uniform", c.n_uniform);
  v("imp_rounds", c.imp_rounds);
  v("imp_per_round", c.imp_per_round);
  v("imp_floor", c.imp_floor);
  v("lr", c.lr);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("adam_eps", c.adam_eps);
  v("grid_res", c.grid_res);
  v("grid_max_res", c.grid_max_res);
  v("upsample_frac1", c.upsample_frac1);
  v("upsample_frac2", c.upsample_frac2);
  v("box_size", c.box_size);
  v("box_cx", c.box_cx);
  v("box_cy", c.box_cy);
  v("box_cz", c.box_cz);
  v("pe_bands", c.pe_bands);
  v("pe_ramp_frac", c.pe_ramp_frac);
  v("ambient_dim", c.ambient_dim);
  v("z_dim", c.z_dim);
  v("a_dim", c.a_dim);
  v("code_sigma", c.code_sigma);
  v("deform_hidden", c.deform_hidden);
  v("deform_depth", c.deform_depth);
  v("deform_skip", c.deform_skip);
  v("decoder_hidden", c.decoder_hidden);
  v("decoder_depth", c.decoder_depth);
  v("color_gets_ambient", c.color_gets_ambient);
  v("two_grids", c.two_grids);
  v("deform_variant", c.deform_variant);
  v("lambda_init", c.lambda_init);
  v("w_rgb", c.w_rgb);
  v("w_depth", c.w_depth);
  v("w_sdf", c.w_sdf);
  v("w_fs", c.w_fs);
  v("w_eik", c.w_eik);
  v("w_smooth", c.w_smooth);
  v("w_mask", c.w_mask);
  v("eps_trunc", c.eps_trunc);
  v("alpha_fs", c.alpha_fs);
  v("delta_std", c.delta_std);
  v("sched_start", c.sched_start);
  v("sched_frac", c.sched_frac);
  v("eikonal_space", c.eikonal_space);
  v("extrapolate_last_alpha", c.extrapolate_last_alpha);
  v("ray_sampling", c.ray_sampling);
  v("mask_band_px", c.mask_band_px);
  v("seed", c.seed);
  v("threads", c.threads);
  v("chunk_rays", c.chunk_rays);
  v("checkpoint_every", c.checkpoint_every);
  v("log_every", c.log_every);
  v("debug_render_every", c.debug_render_every);
  v("debug_frame", c.debug_frame);
  v("precision", c.precision);
  v("sphere_init_radius_frac", c.sphere_init_radius_frac);
  v("sphere_init_steps", c.sphere_init_steps);
  v("sphere_init_tol", c.sphere_init_tol);
}

inline nlohmann::json config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  visit_fields(const_cast<TrainConfig&>(cfg), [&](const char* name, auto& field) {
    j[name] = field;
  });
  return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  if (j.contains("preset")) cfg.apply_preset(j.at("preset").get<std::string>());
  visit_fields(cfg, [&](const char* name, auto& field) {
    using T = std::decay_t<decltype(field)>;
    if (j.contains(name)) field = j.at(name).get<T>();
  });
  return cfg;
}

inline TrainConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open config file ", path);
  nlohmann::json j = nlohmann::json::parse(f);
  return config_from_json(j);
}

inline std::string config_hash(const TrainConfig& cfg) {
  std::string s = config_to_json(cfg).dump();
  return hex64(fnv1a64(s.data(), s.size()));
}

// Piecewise training schedule (pure in the step index).
struct ScheduleState {
  int grid_level = 0;          // 0, 1, 2
  double window_alpha = 0;     // positional-encoding window position
  double mult_rgb = 1;
  double mult_eik = 1;
  double loglam_lo = std::log(1e-2);
  double loglam_hi = std::log(1e6);
};

inline ScheduleState schedule(std::int64_t step, const TrainConfig& cfg) {
  ScheduleState s;
  double frac = cfg.steps > 0 ? double(step) / double(cfg.steps) : 0.0;
  if (frac >= cfg.upsample_frac2)
    s.grid_level = 2;
  else if (frac >= cfg.upsample_frac1)
    s.grid_level = 1;
  double ramp = cfg.pe_ramp_frac > 0 ? std::min(1.0, frac / cfg.pe_ramp_frac) : 1.0;
  s.window_alpha = ramp * double(cfg.pe_bands);
  LossConfig lc = cfg.loss_config();
  s.mult_rgb = lc.schedule_mult(0, frac);
  s.mult_eik = lc.schedule_mult(4, frac);
  return s;
}

}  // namespace warpsdf
