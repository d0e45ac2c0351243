#pragma once

// Simulator configuration and its INI-style file format.

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "wam/denoise_runtime.hpp"
#include "wam/error.hpp"
#include "wam/signal_pipeline.hpp"
#include "wam/text_record.hpp"
#include "wam/toy_world_model.hpp"

namespace wam::sim {

enum class SimMode { DiscreteEvent, RealTime };
enum class LaunchPolicy { Pipelined, FixedPeriod };
/// Where fusion sits relative to smoothing + interpolation.
enum class FusionOrder { SmoothThenFuse, FuseThenSmooth };

struct FusionSettings {
  bool enabled = true;
  int window = 8;              // blend steps after the frozen prefix
  int queue_capacity = 10;
  double cold_start_delay_s = -1.0;  // < 0: nominal latency of the latency model
};

struct SmoothingSettings {
  bool enabled = true;
  signal::SavGolConfig savgol{};
};

struct PolicySettings {
  double offset_sigma = 0.02;   // per-chunk bias, same for every action in a chunk
  double jitter_sigma = 0.002;  // per-action noise
  int video_dim = 8;
};

struct PlantSettings {
  double kp = 400.0;
  double kd = 40.0;
};

struct SimConfig {
  double control_hz = 50.0;
  double model_hz = 10.0;
  int horizon_H = 16;
  double duration_s = 10.0;
  std::uint64_t seed = 0;
  SimMode mode = SimMode::DiscreteEvent;
  LaunchPolicy launch_policy = LaunchPolicy::Pipelined;
  int launch_period_ticks = 10;
  FusionOrder order = FusionOrder::SmoothThenFuse;

  FusionSettings fusion;
  SmoothingSettings smoothing;
  denoise::SamplerConfig sampler = default_sampler();
  toy::LatencyModel latency = default_latency();
  double latency_jitter = 0.3;  // delay = nominal * (1 + jitter * U[0,1))
  PolicySettings policy;
  PlantSettings plant;

  /// Measured delays to replay in place of the latency model.
  std::vector<double> replay_delays;
  /// Inference index whose worker throws (real-time fault injection); -1 = never.
  int fault_at_inference = -1;

  static denoise::SamplerConfig default_sampler() {
    denoise::SamplerConfig s;
    s.total_steps = 30;
    s.joint_prefix_N = 2;
    s.cache_threshold_gamma = 0.99;
    s.cache_length_k = 4;
    return s;
  }

  /// The V2A row of the bundled inference-stack presets.
  static toy::LatencyModel default_latency() {
    toy::LatencyModel m;
    m.per_step_ms = 29.3;
    m.fixed_overhead_ms = 0.0;
    m.steps = 30;
    m.mode = toy::LatencyMode::V2A;
    m.joint_prefix = 2;
    m.v2a_suffix_per_step_ms = 4.5;
    m.cache_k = 4;
    return m;
  }

  double control_period() const { return 1.0 / control_hz; }
  std::size_t control_horizon() const {
    return signal::interpolated_length(static_cast<std::size_t>(horizon_H), model_hz, control_hz);
  }
  long total_ticks() const { return std::lround(duration_s * control_hz); }
  double nominal_delay() const { return toy::latency_of(latency).latency_s; }
  double cold_start_delay() const { return fusion.cold_start_delay_s >= 0.0 ? fusion.cold_start_delay_s : nominal_delay(); }

  double worst_case_delay() const {
    if (!replay_delays.empty()) {
      double m = 0.0;
      for (double d : replay_delays) m = std::max(m, d);
      return m;
    }
    return nominal_delay() * (1.0 + latency_jitter);
  }

  void validate() const {
    require(std::isfinite(model_hz) && model_hz > 0.0, "sim config: model_hz must be > 0");
    require(std::isfinite(control_hz) && control_hz >= model_hz, "sim config: control_hz must be >= model_hz");
    require(horizon_H >= 2, "sim config: horizon must be >= 2");
    require(duration_s > 0.0, "sim config: duration must be > 0");
    require(latency_jitter >= 0.0, "sim config: latency jitter must be >= 0");
    require(fusion.window >= 0 && fusion.queue_capacity >= 1, "sim config: bad fusion settings");
    require(launch_period_ticks >= 1, "sim config: launch period must be >= 1 tick");
    require(policy.video_dim >= 1, "sim config: video_dim must be >= 1");
    for (double d : replay_delays) require(std::isfinite(d) && d >= 0.0, "sim config: replay delays must be >= 0");
    sampler.validate();
    latency.validate();
    smoothing.savgol.validate();
    const double chunk_duration = horizon_H / model_hz;
    require(chunk_duration >= worst_case_delay(),
            "sim config: chunk duration horizon/model_hz = " + record::fmt(chunk_duration) +
                " s is shorter than the worst-case inference delay " + record::fmt(worst_case_delay()) + " s");
  }
};

// ---- file format ------------------------------------------------------------------------

namespace detail {

inline const char* name(SimMode m) { return m == SimMode::RealTime ? "real_time" : "discrete_event"; }
inline const char* name(LaunchPolicy p) { return p == LaunchPolicy::FixedPeriod ? "fixed_period" : "pipelined"; }
inline const char* name(FusionOrder o) { return o == FusionOrder::FuseThenSmooth ? "fuse_then_smooth" : "smooth_then_fuse"; }
inline const char* name(toy::LatencyMode m) { return m == toy::LatencyMode::V2A ? "v2a" : "joint"; }

inline SimMode parse_mode(const std::string& s) {
  if (s == "discrete_event" || s == "discrete") return SimMode::DiscreteEvent;
  if (s == "real_time" || s == "realtime") return SimMode::RealTime;
  throw ValidationError("unknown sim mode '" + s + "'");
}
inline LaunchPolicy parse_policy(const std::string& s) {
  if (s == "pipelined") return LaunchPolicy::Pipelined;
  if (s == "fixed_period") return LaunchPolicy::FixedPeriod;
  throw ValidationError("unknown launch policy '" + s + "'");
}
inline FusionOrder parse_order(const std::string& s) {
  if (s == "smooth_then_fuse") return FusionOrder::SmoothThenFuse;
  if (s == "fuse_then_smooth") return FusionOrder::FuseThenSmooth;
  throw ValidationError("unknown fusion order '" + s + "'");
}
inline toy::LatencyMode parse_latency_mode(const std::string& s) {
  if (s == "joint") return toy::LatencyMode::Joint;
  if (s == "v2a") return toy::LatencyMode::V2A;
  throw ValidationError("unknown latency mode '" + s + "'");
}

}  // namespace detail

namespace pt = boost::property_tree;

inline void write_config(std::ostream& os, const SimConfig& c) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  auto f = [](double v) { return record::fmt(v); };
  os << "[sim]\n"
     << "control_hz = " << f(c.control_hz) << "\nmodel_hz = " << f(c.model_hz) << "\nhorizon = " << c.horizon_H
     << "\nduration = " << f(c.duration_s) << "\nseed = " << c.seed << "\nmode = " << detail::name(c.mode)
     << "\nlaunch_policy = " << detail::name(c.launch_policy) << "\nlaunch_period_ticks = " << c.launch_period_ticks
     << "\norder = " << detail::name(c.order) << "\n\n";
  os << "[fusion]\n"
     << "enabled = " << b(c.fusion.enabled) << "\nwindow = " << c.fusion.window
     << "\nqueue_capacity = " << c.fusion.queue_capacity << "\ncold_start_delay = " << f(c.fusion.cold_start_delay_s)
     << "\n\n";
  os << "[smoothing]\n"
     << "enabled = " << b(c.smoothing.enabled) << "\nwindow = " << c.smoothing.savgol.window
     << "\npolyorder = " << c.smoothing.savgol.polyorder << "\n\n";
  os << "[sampler]\n"
     << "steps = " << c.sampler.total_steps << "\njoint_prefix = " << c.sampler.joint_prefix_N
     << "\ngamma = " << f(c.sampler.cache_threshold_gamma) << "\ncache_k = " << c.sampler.cache_length_k
     << "\ntimeshift_video = " << f(c.sampler.timeshift_video) << "\ntimeshift_action = " << f(c.sampler.timeshift_action)
     << "\ncfg_scale = " << f(c.sampler.cfg_scale) << "\nseed = " << c.sampler.seed << "\n\n";
  os << "[latency]\n"
     << "per_step_ms = " << f(c.latency.per_step_ms) << "\noverhead_ms = " << f(c.latency.fixed_overhead_ms)
     << "\nsteps = " << c.latency.steps << "\nmode = " << detail::name(c.latency.mode)
     << "\nsuffix_per_step_ms = " << f(c.latency.v2a_suffix_per_step_ms) << "\njoint_prefix = " << c.latency.joint_prefix
     << "\ncache_k = " << c.latency.cache_k << "\njitter = " << f(c.latency_jitter) << "\n\n";
  os << "[policy]\n"
     << "offset_sigma = " << f(c.policy.offset_sigma) << "\njitter_sigma = " << f(c.policy.jitter_sigma)
     << "\nvideo_dim = " << c.policy.video_dim << "\n\n";
  os << "[plant]\n"
     << "kp = " << f(c.plant.kp) << "\nkd = " << f(c.plant.kd) << "\n";
}

/// Reads an INI config; missing keys keep their defaults, unknown keys are rejected.
inline SimConfig read_config(std::istream& is) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  SimConfig c;
  auto get_bool = [](const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config: expected boolean, got '" + v + "'");
  };
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ValidationError("config: key '" + section + "' outside a section");
    for (const auto& [key, node] : body) {
      const std::string v = node.get_value<std::string>();
      const std::string where = section + "." + key;
      auto num = [&] { return record::number(v); };
      auto integer = [&] { return static_cast<int>(record::integer(v)); };
      auto u64 = [&] { return static_cast<std::uint64_t>(record::integer(v)); };
      if (section == "sim") {
        if (key == "control_hz") c.control_hz = num();
        else if (key == "model_hz") c.model_hz = num();
        else if (key == "horizon") c.horizon_H = integer();
        else if (key == "duration") c.duration_s = num();
        else if (key == "seed") c.seed = u64();
        else if (key == "mode") c.mode = detail::parse_mode(v);
        else if (key == "launch_policy") c.launch_policy = detail::parse_policy(v);
        else if (key == "launch_period_ticks") c.launch_period_ticks = integer();
        else if (key == "order") c.order = detail::parse_order(v);
        else throw ValidationError("config: unknown key " + where);
      } else if (section == "fusion") {
        if (key == "enabled") c.fusion.enabled = get_bool(v);
        else if (key == "window") c.fusion.window = integer();
        else if (key == "queue_capacity") c.fusion.queue_capacity = integer();
        else if (key == "cold_start_delay") c.fusion.cold_start_delay_s = num();
        else throw ValidationError("config: unknown key " + where);
      } else if (section == "smoothing") {
        if (key == "enabled") c.smoothing.enabled = get_bool(v);
        else if (key == "window") c.smoothing.savgol.window = integer();
        else if (key == "polyorder") c.smoothing.savgol.polyorder = integer();
        else throw ValidationError("config: unknown key " + where);
      } else if (section == "sampler") {
        if (key == "steps") c.sampler.total_steps = integer();
        else if (key == "joint_prefix") c.sampler.joint_prefix_N = integer();
        else if (key == "gamma") c.sampler.cache_threshold_gamma = num();
        else if (key == "cache_k") c.sampler.cache_length_k = integer();
        else if (key == "timeshift_video") c.sampler.timeshift_video = num();
        else if (key == "timeshift_action") c.sampler.timeshift_action = num();
        else if (key == "cfg_scale") c.sampler.cfg_scale = num();
        else if (key == "seed") c.sampler.seed = u64();
        else throw ValidationError("config: unknown key " + where);
      } else if (section == "latency") {
        if (key == "per_step_ms") c.latency.per_step_ms = num();
        else if (key == "overhead_ms") c.latency.fixed_overhead_ms = num();
        else if (key == "steps") c.latency.steps = integer();
        else if (key == "mode") c.latency.mode = detail::parse_latency_mode(v);
        else if (key == "suffix_per_step_ms") c.latency.v2a_suffix_per_step_ms = num();
        else if (key == "joint_prefix") c.latency.joint_prefix = integer();
        else if (key == "cache_k") c.latency.cache_k = integer();
        else if (key == "jitter") c.latency_jitter = num();
        else throw ValidationError("config: unknown key " + where);
      } else if (section == "policy") {
        if (key == "offset_sigma") c.policy.offset_sigma = num();
        else if (key == "jitter_sigma") c.policy.jitter_sigma = num();
        else if (key == "video_dim") c.policy.video_dim = integer();
        else throw ValidationError("config: unknown key " + where);
      } else if (section == "plant") {
        if (key == "kp") c.plant.kp = num();
        else if (key == "kd") c.plant.kd = num();
        else throw ValidationError("config: unknown key " + where);
      } else {
        throw ValidationError("config: unknown section [" + section + "]");
      }
    }
  }
  return c;
}

}  // namespace wam::sim
