#pragma once

// Flow-matching sampler over the (video, action) latent pair.
//
// Path convention: x_t = (1 - t) x_0 + t eps, velocity target eps - x_0.
// Sampling integrates from t = 1 (noise) to t = 0 (data) with explicit Euler
// on a per-modality shifted schedule. The V2A schedule runs `joint_prefix_N`
// joint steps, freezes the video latent, builds the visual context once and
// finishes with action-only steps against it.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wam/error.hpp"
#include "wam/rng.hpp"

namespace wam::denoise {

using Vector = std::vector<double>;

struct LatentState {
  Vector video;
  Vector action;
  double t_video = 1.0;
  double t_action = 1.0;
};

struct SamplerConfig {
  int total_steps = 30;
  int joint_prefix_N = 30;
  double cache_threshold_gamma = 2.0;  // > 1 disables the cache
  int cache_length_k = 0;
  double timeshift_video = 6.0;
  double timeshift_action = 1.0;
  double cfg_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(total_steps >= 1, "SamplerConfig: steps must be >= 1");
    require(joint_prefix_N >= 0 && joint_prefix_N <= total_steps, "SamplerConfig: joint_prefix must be in [0, steps]");
    require(cache_length_k >= 0, "SamplerConfig: cache_k must be >= 0");
    require(timeshift_video > 0.0 && timeshift_action > 0.0, "SamplerConfig: timeshifts must be > 0");
    require(std::isfinite(cfg_scale), "SamplerConfig: cfg_scale must be finite");
  }
};

/// Opaque conditioning handed to the velocity field. `null` marks the
/// unconditional branch used by classifier-free guidance.
struct Condition {
  Vector embedding;
  bool null = false;

  Condition unconditional() const { return Condition{{}, true}; }
};

struct Velocity {
  Vector video;
  Vector action;
};

/// Frozen visual-language context for action-only evaluation. What `data`
/// holds is up to the field (e.g. cached keys/values or a precomputed drift).
struct VideoContext {
  Vector data;
  double t_video = 0.0;
};

class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual Velocity eval(const LatentState& state, const Condition& cond) const = 0;
  virtual VideoContext build_context(const Vector& frozen_video, double t_video, const Condition& cond) const = 0;
  virtual Vector eval_action(const Vector& action, double t_action, const VideoContext& ctx,
                             const Condition& cond) const = 0;
};

// ---- schedule -------------------------------------------------------------------

inline double timeshift_map(double t, double shift) {
  require(shift > 0.0 && std::isfinite(shift), "timeshift_map: shift must be > 0");
  require(t >= 0.0 && t <= 1.0, "timeshift_map: t must be in [0,1]");
  return shift * t / (1.0 + (shift - 1.0) * t);
}

/// n + 1 decreasing timesteps from 1 to 0 on the shifted grid.
inline Vector shifted_schedule(int steps, double shift) {
  require(steps >= 1, "shifted_schedule: steps must be >= 1");
  Vector t(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) t[i] = timeshift_map(1.0 - static_cast<double>(i) / steps, shift);
  t.front() = 1.0;
  t.back() = 0.0;
  return t;
}

/// Training draw: independent uniforms pushed through each modality's shift.
inline std::pair<double, double> sample_train_timesteps(Rng& rng, const SamplerConfig& cfg) {
  const double uv = rng.uniform();
  const double ua = rng.uniform();
  return {timeshift_map(uv, cfg.timeshift_video), timeshift_map(ua, cfg.timeshift_action)};
}

// ---- velocity cache -----------------------------------------------------------------

struct Similarity {
  double value = 0.0;
  bool degenerate = false;
};

inline Similarity cosine_similarity(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "cosine_similarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na <= 1e-12 || nb <= 1e-12) return {0.0, true};
  double s = dot / (na * nb);
  if (s > 1.0) s = 1.0;
  if (s < -1.0) s = -1.0;
  return {s, false};
}

struct CacheState {
  std::optional<Vector> last_velocity;
  int skips_remaining = 0;
  int eval_count = 0;
  int skipped = 0;

  void reset() { *this = CacheState{}; }
};

/// One velocity query through the cache. `evaluate` is only called on real
/// evaluations; a real evaluation whose similarity to the previous one
/// exceeds gamma schedules the next k queries to reuse it.
template <typename Evaluate>
Vector cached_eval(Evaluate&& evaluate, CacheState& cache, double gamma, int k) {
  if (cache.skips_remaining > 0 && cache.last_velocity) {
    --cache.skips_remaining;
    ++cache.skipped;
    return *cache.last_velocity;
  }
  Vector v = evaluate();
  ++cache.eval_count;
  if (cache.last_velocity && k > 0) {
    const auto s = cosine_similarity(v, *cache.last_velocity);
    if (!s.degenerate && s.value > gamma) cache.skips_remaining = k;
  }
  cache.last_velocity = v;
  return v;
}

inline Vector cfg_combine(const Vector& v_uncond, const Vector& v_cond, double scale) {
  require(v_uncond.size() == v_cond.size(), "cfg_combine: length mismatch");
  Vector out(v_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v_uncond[i] + scale * (v_cond[i] - v_uncond[i]);
  return out;
}

// ---- samplers ------------------------------------------------------------------------

struct SampleStats {
  int joint_evals = 0;   // cache-level real evaluations in joint mode
  int action_evals = 0;  // cache-level real evaluations in action-only mode
  int model_calls = 0;   // forward passes, counting both CFG branches
  int cached_skips = 0;
  int context_builds = 0;
};

struct SampleResult {
  LatentState state;
  SampleStats stats;
};

namespace detail {

inline void check_dims(const Vector& got, const Vector& want, const char* what) {
  require(got.size() == want.size(), std::string("velocity field returned wrong ") + what + " dimension");
}

/// Joint velocity with guidance on the video modality only.
inline Velocity guided_joint(const VelocityField& model, const LatentState& state, const Condition& cond,
                             double cfg_scale, SampleStats& stats) {
  Velocity vc = model.eval(state, cond);
  ++stats.model_calls;
  check_dims(vc.video, state.video, "video");
  check_dims(vc.action, state.action, "action");
  if (cfg_scale != 1.0) {
    const Velocity vu = model.eval(state, cond.unconditional());
    ++stats.model_calls;
    check_dims(vu.video, state.video, "video");
    vc.video = cfg_combine(vu.video, vc.video, cfg_scale);
  }
  return vc;
}

inline Vector concat(const Velocity& v) {
  Vector out;
  out.reserve(v.video.size() + v.action.size());
  out.insert(out.end(), v.video.begin(), v.video.end());
  out.insert(out.end(), v.action.begin(), v.action.end());
  return out;
}

inline void axpy(Vector& x, double a, const Vector& v, std::size_t offset = 0) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += a * v[offset + i];
}

inline void validate_init(const LatentState& init) {
  for (double v : init.video) require(std::isfinite(v), "sampler: non-finite video latent");
  for (double v : init.action) require(std::isfinite(v), "sampler: non-finite action latent");
}

/// Euler step i of the joint phase, updating both modalities in place.
inline void joint_step(const VelocityField& model, LatentState& state, const Condition& cond,
                       const SamplerConfig& cfg, const Vector& tv, const Vector& ta, int i, CacheState& cache,
                       SampleStats& stats) {
  state.t_video = tv[i];
  state.t_action = ta[i];
  const Vector v = cached_eval(
      [&] { return concat(guided_joint(model, state, cond, cfg.cfg_scale, stats)); }, cache,
      cfg.cache_threshold_gamma, cfg.cache_length_k);
  axpy(state.video, tv[i + 1] - tv[i], v, 0);
  axpy(state.action, ta[i + 1] - ta[i], v, state.video.size());
}

}  // namespace detail

inline SampleResult sample_joint(const VelocityField& model, const LatentState& init, const SamplerConfig& cfg,
                                 const Condition& cond = {}) {
  cfg.validate();
  detail::validate_init(init);
  const Vector tv = shifted_schedule(cfg.total_steps, cfg.timeshift_video);
  const Vector ta = shifted_schedule(cfg.total_steps, cfg.timeshift_action);
  SampleResult r{init, {}};
  CacheState cache;
  for (int i = 0; i < cfg.total_steps; ++i) detail::joint_step(model, r.state, cond, cfg, tv, ta, i, cache, r.stats);
  r.state.t_video = tv.back();
  r.state.t_action = ta.back();
  r.stats.joint_evals = cache.eval_count;
  r.stats.cached_skips = cache.skipped;
  return r;
}

inline SampleResult sample_v2a(const VelocityField& model, const LatentState& init, const SamplerConfig& cfg,
                               const Condition& cond = {}) {
  cfg.validate();
  detail::validate_init(init);
  const Vector tv = shifted_schedule(cfg.total_steps, cfg.timeshift_video);
  const Vector ta = shifted_schedule(cfg.total_steps, cfg.timeshift_action);
  const int n = cfg.total_steps;
  const int prefix = cfg.joint_prefix_N;
  SampleResult r{init, {}};
  CacheState cache;
  for (int i = 0; i < prefix; ++i) detail::joint_step(model, r.state, cond, cfg, tv, ta, i, cache, r.stats);
  r.stats.joint_evals = cache.eval_count;
  r.stats.cached_skips = cache.skipped;
  if (prefix == n) {
    r.state.t_video = tv.back();
    r.state.t_action = ta.back();
    return r;
  }

  // Video freezes at z_v^(N); its context is built exactly once.
  r.state.t_video = tv[prefix];
  const VideoContext ctx = model.build_context(r.state.video, tv[prefix], cond);
  ++r.stats.context_builds;
  cache.reset();
  for (int i = prefix; i < n; ++i) {
    r.state.t_action = ta[i];
    const Vector v = cached_eval(
        [&] {
          Vector va = model.eval_action(r.state.action, ta[i], ctx, cond);
          ++r.stats.model_calls;
          detail::check_dims(va, r.state.action, "action");
          return va;
        },
        cache, cfg.cache_threshold_gamma, cfg.cache_length_k);
    detail::axpy(r.state.action, ta[i + 1] - ta[i], v);
  }
  r.state.t_action = ta.back();
  r.stats.action_evals = cache.eval_count;
  r.stats.cached_skips += cache.skipped;
  return r;
}

// ---- training-time augmentations and loss -------------------------------------------

/// With probability p: s z0 + (1 - s) eps, s ~ U[0.3, 0.7], eps ~ N(0, I).
inline Vector noisy_condition_augment(const Vector& z0, Rng& rng, double p = 0.5) {
  require(p >= 0.0 && p <= 1.0, "noisy_condition_augment: p must be in [0,1]");
  if (!rng.bernoulli(p)) return z0;
  const double s = rng.uniform(0.3, 0.7);
  Vector out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = s * z0[i] + (1.0 - s) * rng.normal();
  return out;
}

/// views[0] is the primary view and always survives.
inline std::vector<int> view_dropout(const std::vector<int>& views, Rng& rng, double p = 0.1) {
  require(p >= 0.0 && p <= 1.0, "view_dropout: p must be in [0,1]");
  std::vector<int> kept;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const bool drop = rng.bernoulli(p);
    if (i == 0 || !drop) kept.push_back(views[i]);
  }
  return kept;
}

inline double mse(const Vector& pred, const Vector& target) {
  require(pred.size() == target.size(), "flow_loss: prediction/target length mismatch");
  if (pred.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    acc += e * e;
  }
  return acc / static_cast<double>(pred.size());
}

inline double flow_loss(const Vector& pred_v, const Vector& target_v, const Vector& pred_a, const Vector& target_a,
                        double lambda_v, double lambda_a) {
  return lambda_v * mse(pred_v, target_v) + lambda_a * mse(pred_a, target_a);
}

}  // namespace wam::denoise
