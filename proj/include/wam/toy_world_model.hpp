#pragma once

// Analytic velocity fields, a latency model for the inference stack, and a
// double-integrator plant. These are the closed-form references the runtime
// is checked against.

#include <cmath>
#include <string>
#include <vector>

#include "wam/denoise_runtime.hpp"
#include "wam/error.hpp"

namespace wam::toy {

using denoise::Condition;
using denoise::LatentState;
using denoise::Vector;
using denoise::Velocity;
using denoise::VideoContext;

/// v(x) = a x + b, elementwise.
struct LinearField {
  double a = 0.0;
  double b = 0.0;

  double operator()(double x) const { return a * x + b; }
};

/// Flow of dx/dtau = a x + b for `duration`.
inline double exact_endpoint(const LinearField& f, double x0, double duration) {
  if (f.a == 0.0) return x0 + f.b * duration;
  const double g = std::exp(f.a * duration);
  return g * x0 + std::expm1(f.a * duration) * f.b / f.a;
}

/// Sampler endpoint of a LinearField integrated from t = 1 down to t = 0.
/// Reversing time flips the sign of the field.
inline double exact_sampler_endpoint(const LinearField& f, double x_noise) {
  return exact_endpoint(LinearField{-f.a, -f.b}, x_noise, 1.0);
}

/// Video: base_video(x). Action: base_action(x) + coupling * video, where the
/// video is the live latent in joint mode and the frozen one in action-only
/// mode. The frozen context stores coupling * z_v precomputed once.
class CoupledField final : public denoise::VelocityField {
 public:
  CoupledField(LinearField video, LinearField action, std::size_t video_dim, std::size_t action_dim,
               std::vector<double> coupling = {})
      : video_(video), action_(action), vdim_(video_dim), adim_(action_dim), coupling_(std::move(coupling)) {
    if (coupling_.empty()) coupling_.assign(vdim_ * adim_, 0.0);
    require(coupling_.size() == vdim_ * adim_, "CoupledField: coupling must be action_dim x video_dim");
    require(std::isfinite(video.a) && std::isfinite(video.b) && std::isfinite(action.a) && std::isfinite(action.b),
            "CoupledField: coefficients must be finite");
  }

  /// Added to the video velocity on the conditional branch only.
  void set_conditioned_video_bias(std::vector<double> bias) {
    require(bias.size() == vdim_, "CoupledField: bias must match video dimension");
    cond_bias_ = std::move(bias);
  }

  Velocity eval(const LatentState& s, const Condition& cond) const override {
    Velocity v;
    v.video.resize(s.video.size());
    for (std::size_t i = 0; i < s.video.size(); ++i) {
      v.video[i] = video_(s.video[i]);
      if (!cond.null && !cond_bias_.empty()) v.video[i] += cond_bias_[i];
    }
    const Vector drift = couple(s.video);
    v.action.resize(s.action.size());
    for (std::size_t i = 0; i < s.action.size(); ++i) v.action[i] = action_(s.action[i]) + drift[i];
    return v;
  }

  VideoContext build_context(const Vector& frozen_video, double t_video, const Condition&) const override {
    return VideoContext{couple(frozen_video), t_video};
  }

  Vector eval_action(const Vector& action, double, const VideoContext& ctx, const Condition&) const override {
    Vector v(action.size());
    for (std::size_t i = 0; i < action.size(); ++i) v[i] = action_(action[i]) + ctx.data[i];
    return v;
  }

  const std::vector<double>& coupling() const { return coupling_; }
  const LinearField& action_field() const { return action_; }

 private:
  Vector couple(const Vector& video) const {
    require(video.size() == vdim_, "CoupledField: video dimension mismatch");
    Vector out(adim_, 0.0);
    for (std::size_t r = 0; r < adim_; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < vdim_; ++c) acc += coupling_[r * vdim_ + c] * video[c];
      out[r] = acc;
    }
    return out;
  }

  LinearField video_;
  LinearField action_;
  std::size_t vdim_;
  std::size_t adim_;
  std::vector<double> coupling_;
  std::vector<double> cond_bias_;
};

/// Straight-path field toward fixed targets: v = (x - target) / t. Euler on
/// any schedule ending at t = 0 lands on the target exactly, and consecutive
/// velocities are parallel, so the velocity cache fires.
class TargetField final : public denoise::VelocityField {
 public:
  TargetField(Vector video_target, Vector action_target)
      : video_target_(std::move(video_target)), action_target_(std::move(action_target)) {}

  Velocity eval(const LatentState& s, const Condition&) const override {
    return {toward(s.video, video_target_, s.t_video), toward(s.action, action_target_, s.t_action)};
  }
  VideoContext build_context(const Vector&, double t_video, const Condition&) const override { return {{}, t_video}; }
  Vector eval_action(const Vector& action, double t_action, const VideoContext&, const Condition&) const override {
    return toward(action, action_target_, t_action);
  }

 private:
  static Vector toward(const Vector& x, const Vector& target, double t) {
    require(x.size() == target.size(), "TargetField: dimension mismatch");
    require(t > 0.0, "TargetField: evaluated at t = 0");
    Vector v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = (x[i] - target[i]) / t;
    return v;
  }

  Vector video_target_;
  Vector action_target_;
};

// ---- latency accounting -----------------------------------------------------------------

enum class LatencyMode { Joint, V2A };

/// Real evaluations of an always-firing cache over `steps` queries: the first
/// two are real, then every (k+1)-th.
inline int cached_eval_count(int steps, int k) {
  if (steps <= 0) return 0;
  if (k <= 0) return steps;
  return 1 + (steps - 1 + k) / (k + 1);
}

struct LatencyModel {
  double per_step_ms = 95.0;
  double fixed_overhead_ms = 150.0;
  int steps = 50;
  LatencyMode mode = LatencyMode::Joint;
  double v2a_suffix_per_step_ms = 0.0;
  int joint_prefix = 0;  // V2A mode only
  int cache_k = 0;       // 0 = no velocity cache

  void validate() const {
    require(per_step_ms >= 0.0 && fixed_overhead_ms >= 0.0 && v2a_suffix_per_step_ms >= 0.0,
            "LatencyModel: costs must be nonnegative");
    require(steps >= 0 && cache_k >= 0 && joint_prefix >= 0, "LatencyModel: counts must be nonnegative");
    require(mode == LatencyMode::Joint || joint_prefix <= steps, "LatencyModel: joint_prefix exceeds steps");
  }

  /// Forward passes actually paid for in each phase.
  int joint_evals() const {
    return cached_eval_count(mode == LatencyMode::Joint ? steps : joint_prefix, cache_k);
  }
  int suffix_evals() const { return mode == LatencyMode::V2A ? cached_eval_count(steps - joint_prefix, cache_k) : 0; }
};

struct Latency {
  double latency_s = 0.0;
  double frequency_hz = 0.0;
};

inline Latency latency_of(const LatencyModel& m) {
  m.validate();
  const double ms = m.joint_evals() * m.per_step_ms + m.suffix_evals() * m.v2a_suffix_per_step_ms + m.fixed_overhead_ms;
  const double s = ms / 1000.0;
  return {s, s > 0.0 ? 1.0 / s : 0.0};
}

// ---- plant ---------------------------------------------------------------------------------

/// Per-dimension double integrator.
struct ToyPlant {
  std::vector<double> position;
  std::vector<double> velocity;
  double control_period = 0.02;

  ToyPlant() = default;
  ToyPlant(std::size_t dims, double dt) : position(dims, 0.0), velocity(dims, 0.0), control_period(dt) {
    require(dt > 0.0, "ToyPlant: control period must be > 0");
  }
};

inline ToyPlant plant_step(ToyPlant plant, const std::vector<double>& accel) {
  require(accel.size() == plant.position.size(), "plant_step: action dimension mismatch");
  for (std::size_t i = 0; i < accel.size(); ++i) {
    plant.velocity[i] += accel[i] * plant.control_period;
    plant.position[i] += plant.velocity[i] * plant.control_period;
  }
  return plant;
}

}  // namespace wam::toy
