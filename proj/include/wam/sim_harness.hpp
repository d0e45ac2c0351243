#pragma once

// Closed-loop simulation of asynchronous chunked control.
//
// The executor plays the active control-rate chunk one action per tick. An
// inference request launched at tick k captures s, the number of actions of
// the active chunk already executed, and produces a fresh chunk whose index 0
// is aligned with tick k (fresh index i <-> old index s + i). A request whose
// delay is delta becomes usable at tick k + max(1, ceil(delta / dt)); the
// executor swaps there and continues at index e = swap tick - launch tick.
// The same protocol runs on a virtual clock (discrete-event) or on the wall
// clock with an executor and an inference worker thread.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <thread>
#include <vector>

#include "wam/chunk_schedule.hpp"
#include "wam/denoise_runtime.hpp"
#include "wam/error.hpp"
#include "wam/pose_actions.hpp"
#include "wam/rng.hpp"
#include "wam/signal_pipeline.hpp"
#include "wam/sim_config.hpp"
#include "wam/sim_trace.hpp"
#include "wam/toy_world_model.hpp"

namespace wam::sim {

using signal::ActionChunk;

/// Smooth reference the toy policy tracks: positions, a yaw rotation in 6D
/// form, and a normalized gripper.
inline Action reference_action(double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Action a{};
  for (int i = 0; i < 3; ++i) a[i] = 0.1 * std::sin(two_pi * 0.25 * t + i);
  const double yaw = 0.3 * std::sin(two_pi * 0.2 * t);
  a[3] = std::cos(yaw);
  a[4] = std::sin(yaw);
  a[5] = 0.0;
  a[6] = -std::sin(yaw);
  a[7] = std::cos(yaw);
  a[8] = 0.0;
  a[9] = 0.8 * std::sin(two_pi * 0.1 * t);
  return a;
}

struct InferenceJob {
  int id = 0;
  long launch_tick = 0;
  long s = 0;
};

struct ChunkPayload {
  int id = 0;
  long launch_tick = 0;
  ActionChunk control;  // what the executor plays
  ActionChunk model;    // model-rate chunk after fusion (fuse-then-smooth order)
  std::optional<FusionEvent> fusion;
  bool fusion_enabled = true;
  bool cold_start = false;
  double queue_max = -1.0;  // max(Q) at launch, -1 when empty
};

/// Model-rate chunk from the toy policy: the reference sampled on the
/// execution grid plus a per-chunk offset and per-action noise, generated by
/// the V2A sampler from seeded noise.
inline ActionChunk generate_model_chunk(const SimConfig& cfg, int id, long launch_tick) {
  const std::size_t h = static_cast<std::size_t>(cfg.horizon_H);
  const std::size_t hc = cfg.control_horizon();
  const double dt = cfg.control_period();
  const double spacing = static_cast<double>(hc - 1) * dt / static_cast<double>(h - 1);
  const double t0 = static_cast<double>(launch_tick) * dt;

  Rng rng = Rng::stream(cfg.seed, 2 * static_cast<std::uint64_t>(id) + 1);
  Action offset{};
  for (auto& o : offset) o = cfg.policy.offset_sigma * rng.normal();
  denoise::Vector action_target(h * pose::kActionDim);
  for (std::size_t i = 0; i < h; ++i) {
    const Action r = reference_action(t0 + static_cast<double>(i) * spacing);
    for (int d = 0; d < pose::kActionDim; ++d)
      action_target[i * pose::kActionDim + d] = r[d] + offset[d] + cfg.policy.jitter_sigma * rng.normal();
  }
  denoise::Vector video_target(static_cast<std::size_t>(cfg.policy.video_dim));
  for (std::size_t j = 0; j < video_target.size(); ++j) video_target[j] = std::sin(t0 + 0.3 * static_cast<double>(j));

  Rng noise = Rng::stream(cfg.seed ^ (cfg.sampler.seed * 0x2545F4914F6CDD1DULL), 2 * static_cast<std::uint64_t>(id));
  denoise::LatentState init;
  init.video.resize(video_target.size());
  init.action.resize(action_target.size());
  for (auto& v : init.video) v = noise.normal();
  for (auto& v : init.action) v = noise.normal();

  const toy::TargetField field(video_target, action_target);
  const auto result = denoise::sample_v2a(field, init, cfg.sampler);

  ActionChunk chunk;
  chunk.model_hz = cfg.model_hz;
  chunk.actions.resize(h);
  for (std::size_t i = 0; i < h; ++i)
    for (int d = 0; d < pose::kActionDim; ++d) chunk[i][d] = result.state.action[i * pose::kActionDim + d];
  return chunk;
}

inline ActionChunk to_control_rate(const SimConfig& cfg, const ActionChunk& model_chunk) {
  ActionChunk c = model_chunk;
  if (cfg.smoothing.enabled) c = signal::smooth_chunk(c, cfg.smoothing.savgol).chunk;
  return signal::freq_interpolate(c, cfg.control_hz);
}

/// Linear interpolation of a chunk at a fractional index.
inline Action sample_chunk(const ActionChunk& c, double u) {
  if (u <= 0.0) return c[0];
  const auto last = static_cast<double>(c.size() - 1);
  if (u >= last) return c[c.size() - 1];
  const auto lo = static_cast<std::size_t>(std::floor(u));
  const double f = u - static_cast<double>(lo);
  Action a{};
  for (int d = 0; d < pose::kActionDim; ++d) a[d] = c[lo][d] + f * (c[lo + 1][d] - c[lo][d]);
  return a;
}

/// Inference side: owns the delay queue and the last chunk it produced.
class ChunkProducer {
 public:
  explicit ChunkProducer(const SimConfig& cfg)
      : cfg_(cfg), queue_(static_cast<std::size_t>(cfg.fusion.queue_capacity), cfg.cold_start_delay()) {}

  bool has_delay(int id) const {
    return cfg_.replay_delays.empty() || static_cast<std::size_t>(id) < cfg_.replay_delays.size();
  }

  /// Delay this request takes: replayed, or nominal * (1 + jitter * U).
  double delay_for(int id) const {
    if (!cfg_.replay_delays.empty()) return cfg_.replay_delays.at(static_cast<std::size_t>(id));
    Rng rng = Rng::stream(cfg_.seed ^ 0xD1B54A32D192ED03ULL, static_cast<std::uint64_t>(id));
    return cfg_.nominal_delay() * (1.0 + cfg_.latency_jitter * rng.uniform());
  }

  ChunkPayload produce(const InferenceJob& job) {
    ChunkPayload p;
    p.id = job.id;
    p.launch_tick = job.launch_tick;
    p.fusion_enabled = cfg_.fusion.enabled;
    p.cold_start = queue_.empty();
    p.queue_max = queue_.empty() ? -1.0 : queue_.estimate();
    const double estimate = queue_.estimate();
    const ActionChunk fresh_model = generate_model_chunk(cfg_, job.id, job.launch_tick);

    if (cfg_.order == FusionOrder::SmoothThenFuse) {
      p.model = fresh_model;
      p.control = to_control_rate(cfg_, fresh_model);
      if (last_) {
        const auto plan = make_plan(estimate, cfg_.control_period(), last_->control.size(),
                                    static_cast<std::size_t>(job.s), p.control.size(), cfg_.fusion.window);
        p.control = schedule::fuse_chunks(schedule::remaining_actions(last_->control, static_cast<std::size_t>(job.s)),
                                          p.control, plan.weights);
        p.fusion = fusion_event(job, plan);
      }
    } else {
      p.model = fresh_model;
      if (last_) {
        // Model-rate fusion; old samples are read at the fresh chunk's times.
        const double spacing = model_spacing();
        const double offset = static_cast<double>(job.launch_tick - last_->launch_tick) * cfg_.control_period() / spacing;
        const double last_index = static_cast<double>(last_->model.size() - 1);
        ActionChunk remain;
        remain.model_hz = cfg_.model_hz;
        for (std::size_t i = 0; i < fresh_model.size() && offset + static_cast<double>(i) <= last_index + 1e-9; ++i)
          remain.actions.push_back(sample_chunk(last_->model, offset + static_cast<double>(i)));
        const int window = static_cast<int>(std::lround(cfg_.fusion.window * cfg_.control_period() / spacing));
        const auto plan = make_plan(estimate, spacing, remain.size(), 0, fresh_model.size(), window);
        if (!remain.actions.empty()) p.model = schedule::fuse_chunks(remain, fresh_model, plan.weights);
        p.fusion = fusion_event(job, plan);
      }
      p.control = to_control_rate(cfg_, p.model);
    }
    last_ = p;
    return p;
  }

  void complete(double measured_delay) { queue_.push(measured_delay); }
  const schedule::DelayQueue& queue() const { return queue_; }

 private:
  double model_spacing() const {
    return static_cast<double>(cfg_.control_horizon() - 1) * cfg_.control_period() /
           static_cast<double>(cfg_.horizon_H - 1);
  }

  schedule::FusionPlan make_plan(double estimate, double period, std::size_t old_len, std::size_t s,
                                 std::size_t horizon, int window) const {
    if (!cfg_.fusion.enabled) {
      schedule::FusionPlan off;
      off.d_requested = schedule::steps_of_delay(estimate, period);
      off.weights.assign(horizon, 0.0);
      return off;
    }
    return schedule::plan_fusion(estimate, period, old_len, s, horizon, window);
  }

  FusionEvent fusion_event(const InferenceJob& job, const schedule::FusionPlan& plan) const {
    return FusionEvent{last_->id, job.id, 0.0, job.s, plan.d_requested, plan.d, plan.L, plan.weights};
  }

  SimConfig cfg_;
  schedule::DelayQueue queue_;
  std::optional<ChunkPayload> last_;
};

/// Executor side: active chunk, plant, and tick bookkeeping.
class Executor {
 public:
  explicit Executor(const SimConfig& cfg) : cfg_(cfg), plant_(3, cfg.control_period()) {
    last_action_ = reference_action(0.0);
    for (int i = 0; i < 3; ++i) plant_.position[i] = last_action_[i];
  }

  bool has_chunk() const { return active_ != nullptr; }
  int active_id() const { return active_ ? active_->id : -1; }

  /// Actions of the active chunk executed before tick k.
  long executed_before(long k) const { return active_ ? std::max(0L, k - active_->launch_tick) : 0; }

  SwapEvent swap(std::shared_ptr<const ChunkPayload> next, long k, double t, double delta) {
    SwapEvent ev;
    ev.t = t;
    ev.tick = k;
    ev.old_id = active_id();
    ev.new_id = next->id;
    ev.e = k - next->launch_tick;
    ev.d = next->fusion ? next->fusion->d : 0;
    if (ev.old_id < 0) {
      ev.cause = "initial";
    } else if (ev.e <= ev.d) {
      ev.cause = "ok";
    } else if (!next->fusion_enabled) {
      ev.cause = "disabled";
    } else if (next->cold_start) {
      ev.cause = "first";
    } else if (delta > next->queue_max) {
      ev.cause = "spike";
    } else if (next->fusion && next->fusion->d < next->fusion->d_req) {
      ev.cause = "clipped";
    } else {
      ev.cause = "zero_delay";
    }
    active_ = std::move(next);
    return ev;
  }

  TickEvent tick(long k, double t) {
    TickEvent ev;
    ev.k = k;
    ev.t = t;
    ev.chunk = active_id();
    Action a = last_action_;
    if (active_) {
      ev.idx = k - active_->launch_tick;
      if (ev.idx >= 0 && static_cast<std::size_t>(ev.idx) < active_->control.size())
        a = active_->control[static_cast<std::size_t>(ev.idx)];
      else
        ev.stall = true;
    }
    ev.a = a;
    last_action_ = a;

    std::vector<double> accel(3);
    for (int i = 0; i < 3; ++i) accel[i] = cfg_.plant.kp * (a[i] - plant_.position[i]) - cfg_.plant.kd * plant_.velocity[i];
    plant_ = toy::plant_step(std::move(plant_), accel);
    const Action ref = reference_action(static_cast<double>(k + 1) * cfg_.control_period());
    double e2 = 0.0;
    for (int i = 0; i < 3; ++i) e2 += (plant_.position[i] - ref[i]) * (plant_.position[i] - ref[i]);
    ev.err = std::sqrt(e2);
    return ev;
  }

 private:
  SimConfig cfg_;
  toy::ToyPlant plant_;
  std::shared_ptr<const ChunkPayload> active_;
  Action last_action_{};
};

/// Tick at which a request becomes usable.
inline long usable_tick(long launch_tick, double delta, double control_period) {
  return launch_tick + std::max(1, schedule::steps_of_delay(delta, control_period));
}

struct RunResult {
  SimTrace trace;
  Metrics metrics;
  std::optional<std::string> error;
};

inline std::string trace_header(const SimConfig& cfg, const char* mode) {
  return std::string("mode=") + mode + " seed=" + std::to_string(cfg.seed) + " control_hz=" + record::fmt(cfg.control_hz) +
         " model_hz=" + record::fmt(cfg.model_hz) + " horizon=" + std::to_string(cfg.horizon_H) +
         " fusion=" + (cfg.fusion.enabled ? "on" : "off") + " order=" + detail::name(cfg.order);
}

// ---- discrete-event ------------------------------------------------------------------------

inline RunResult run_discrete_event(const SimConfig& cfg_in) {
  SimConfig cfg = cfg_in;
  cfg.validate();
  const double dt = cfg.control_period();
  const long n_ticks = cfg.total_ticks();

  enum class Kind { Complete = 0, Tick = 1 };
  struct Scheduled {
    double time;
    Kind kind;
    long seq;
    long tick;
    bool operator>(const Scheduled& o) const {
      if (time != o.time) return time > o.time;
      if (kind != o.kind) return kind > o.kind;
      return seq > o.seq;
    }
  };
  struct Pending {
    InferenceJob job;
    std::shared_ptr<const ChunkPayload> payload;
    double delta = 0.0;
    long swap_tick = 0;
    bool finished = false;
  };

  std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<>> calendar;
  long seq = 0;
  ChunkProducer producer(cfg);
  Executor executor(cfg);
  std::optional<Pending> pending;
  int next_id = 0;
  RunResult out;
  out.trace.header = trace_header(cfg, "discrete_event");
  auto& events = out.trace.events;

  calendar.push({0.0, Kind::Tick, seq++, 0});
  while (!calendar.empty()) {
    const Scheduled ev = calendar.top();
    calendar.pop();
    if (ev.kind == Kind::Complete) {
      auto& p = *pending;
      p.finished = true;
      events.push_back(FinishEvent{p.job.id, ev.time, p.delta});
      if (p.payload->fusion) {
        FusionEvent f = *p.payload->fusion;
        f.t = ev.time;
        events.push_back(f);
      }
      producer.complete(p.delta);
      continue;
    }

    const long k = ev.tick;
    const double t = static_cast<double>(k) * dt;
    if (pending && pending->finished && k >= pending->swap_tick) {
      events.push_back(executor.swap(pending->payload, k, t, pending->delta));
      pending.reset();
    }
    const bool launch_slot = cfg.launch_policy == LaunchPolicy::Pipelined || k % cfg.launch_period_ticks == 0;
    if (!pending && launch_slot && producer.has_delay(next_id)) {
      Pending p;
      p.job = InferenceJob{next_id++, k, executor.executed_before(k)};
      events.push_back(LaunchEvent{p.job.id, t, k, p.job.s, producer.queue().estimate()});
      p.payload = std::make_shared<const ChunkPayload>(producer.produce(p.job));
      p.delta = producer.delay_for(p.job.id);
      p.swap_tick = usable_tick(k, p.delta, dt);
      const double done = std::min(t + p.delta, static_cast<double>(p.swap_tick) * dt);
      if (done < static_cast<double>(n_ticks) * dt) calendar.push({done, Kind::Complete, seq++, -1});
      pending = std::move(p);
    }
    events.push_back(executor.tick(k, t));
    if (k + 1 < n_ticks) calendar.push({static_cast<double>(k + 1) * dt, Kind::Tick, seq++, k + 1});
  }
  out.metrics = compute_metrics(out.trace, dt);
  return out;
}

// ---- real time ---------------------------------------------------------------------------------

inline RunResult run_real_time(const SimConfig& cfg_in) {
  SimConfig cfg = cfg_in;
  cfg.validate();
  using Clock = std::chrono::steady_clock;
  const double dt = cfg.control_period();
  const long n_ticks = cfg.total_ticks();

  struct Published {
    ChunkPayload payload;
    std::atomic<double> delta{-1.0};  // set after the pointer is visible
  };
  struct Shared {
    std::atomic<long> job_seq{0};
    InferenceJob job;  // written before job_seq is bumped
    std::atomic<Published*> slot{nullptr};
    std::atomic<bool> stop{false};
    std::atomic<bool> failed{false};
    std::string error;  // written before failed is set
  } shared;

  const auto start = Clock::now();
  auto since_start = [&](Clock::time_point tp) { return std::chrono::duration<double>(tp - start).count(); };
  auto at = [&](double seconds) {
    return start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
  };

  std::vector<Event> worker_events;
  std::thread worker([&] {
    ChunkProducer producer(cfg);
    long seen = 0;
    try {
      while (true) {
        shared.job_seq.wait(seen, std::memory_order_acquire);
        seen = shared.job_seq.load(std::memory_order_acquire);
        if (shared.stop.load(std::memory_order_acquire)) break;
        const InferenceJob job = shared.job;
        worker_events.push_back(
            LaunchEvent{job.id, since_start(Clock::now()), job.launch_tick, job.s, producer.queue().estimate()});
        if (job.id == cfg.fault_at_inference) throw std::runtime_error("injected inference fault at request " + std::to_string(job.id));
        auto pub = std::make_unique<Published>();
        pub->payload = producer.produce(job);
        const double launch_t = static_cast<double>(job.launch_tick) * dt;
        std::this_thread::sleep_until(at(launch_t + producer.delay_for(job.id)));
        if (shared.stop.load(std::memory_order_acquire)) break;
        const bool fused = pub->payload.fusion.has_value();
        FusionEvent f{};
        if (fused) f = *pub->payload.fusion;
        Published* raw = pub.release();
        shared.slot.store(raw, std::memory_order_release);
        const double done = since_start(Clock::now());
        const double delta = done - launch_t;
        raw->delta.store(delta, std::memory_order_release);  // last touch of *raw
        producer.complete(delta);
        worker_events.push_back(FinishEvent{job.id, done, delta});
        if (fused) {
          f.t = done;
          worker_events.push_back(f);
        }
      }
    } catch (const std::exception& e) {
      shared.error = e.what();
      shared.failed.store(true, std::memory_order_release);
    }
  });

  Executor executor(cfg);
  std::vector<Event> exec_events;
  std::unique_ptr<Published> incoming;
  bool in_flight = false;
  int next_id = 0;
  ChunkProducer delay_source(cfg);  // only consulted for has_delay()

  for (long k = 0; k < n_ticks; ++k) {
    std::this_thread::sleep_until(at(static_cast<double>(k) * dt));
    const double t = since_start(Clock::now());
    if (shared.failed.load(std::memory_order_acquire)) break;

    if (!incoming) incoming.reset(shared.slot.exchange(nullptr, std::memory_order_acquire));
    if (incoming) {
      const double delta = incoming->delta.load(std::memory_order_acquire);
      if (delta >= 0.0 && k >= usable_tick(incoming->payload.launch_tick, delta, dt)) {
        auto payload = std::make_shared<const ChunkPayload>(std::move(incoming->payload));
        incoming.reset();
        exec_events.push_back(executor.swap(std::move(payload), k, t, delta));
        in_flight = false;
      }
    }
    const bool launch_slot = cfg.launch_policy == LaunchPolicy::Pipelined || k % cfg.launch_period_ticks == 0;
    if (!in_flight && launch_slot && delay_source.has_delay(next_id)) {
      shared.job = InferenceJob{next_id++, k, executor.executed_before(k)};
      shared.job_seq.fetch_add(1, std::memory_order_release);
      shared.job_seq.notify_one();
      in_flight = true;
    }
    exec_events.push_back(executor.tick(k, t));
  }

  shared.stop.store(true, std::memory_order_release);
  shared.job_seq.fetch_add(1, std::memory_order_release);
  shared.job_seq.notify_one();
  worker.join();
  incoming.reset();
  delete shared.slot.exchange(nullptr);

  RunResult out;
  out.trace.header = trace_header(cfg, "real_time");
  out.trace.events = std::move(exec_events);
  out.trace.events.insert(out.trace.events.end(), worker_events.begin(), worker_events.end());
  std::stable_sort(out.trace.events.begin(), out.trace.events.end(),
                   [](const Event& a, const Event& b) { return event_time(a) < event_time(b); });
  if (shared.failed.load()) out.error = shared.error;
  out.metrics = compute_metrics(out.trace, dt);
  return out;
}

inline RunResult run(const SimConfig& cfg) {
  return cfg.mode == SimMode::RealTime ? run_real_time(cfg) : run_discrete_event(cfg);
}

// ---- replay ---------------------------------------------------------------------------------------

/// Measured delays of finished requests, in request order.
inline std::vector<double> measured_delays(const SimTrace& trace) {
  auto fin = trace.all<FinishEvent>();
  std::sort(fin.begin(), fin.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<double> out;
  for (std::size_t i = 0; i < fin.size() && fin[i].id == static_cast<int>(i); ++i) out.push_back(fin[i].delta);
  return out;
}

/// One swap together with the fusion that produced the incoming chunk.
struct Decision {
  SwapEvent swap;
  std::optional<FusionEvent> fusion;
};

inline std::vector<Decision> fusion_decisions(const SimTrace& trace) {
  const auto fusions = trace.all<FusionEvent>();
  std::vector<Decision> out;
  for (const auto& s : trace.all<SwapEvent>()) {
    Decision d{s, std::nullopt};
    for (const auto& f : fusions)
      if (f.new_id == s.new_id) d.fusion = f;
    out.push_back(d);
  }
  return out;
}

/// Timestamp-free equality of two decisions.
inline bool same_decision(const Decision& a, const Decision& b) {
  const auto& x = a.swap;
  const auto& y = b.swap;
  if (x.tick != y.tick || x.old_id != y.old_id || x.new_id != y.new_id || x.e != y.e || x.d != y.d || x.cause != y.cause)
    return false;
  if (a.fusion.has_value() != b.fusion.has_value()) return false;
  if (!a.fusion) return true;
  const auto& f = *a.fusion;
  const auto& g = *b.fusion;
  return f.old_id == g.old_id && f.new_id == g.new_id && f.s == g.s && f.d_req == g.d_req && f.d == g.d && f.L == g.L &&
         f.w == g.w;
}

}  // namespace wam::sim
