#pragma once

// Asynchronous chunk fusion: delay in control steps, frozen prefix,
// exponentially decaying blend between the unexecuted old chunk and the
// freshly generated one.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

#include "wam/error.hpp"
#include "wam/signal_pipeline.hpp"

namespace wam::schedule {

using signal::Action;
using signal::ActionChunk;

inline constexpr double kDelayEpsilon = 1e-9;

struct FusionConfig {
  int fusion_end_L = 8;
  double control_period = 0.02;

  void validate() const {
    require(fusion_end_L >= 0, "FusionConfig: fusion_end_L must be >= 0");
    require(std::isfinite(control_period) && control_period > 0.0, "FusionConfig: control_period must be > 0");
  }
};

struct ExecutionState {
  ActionChunk active_chunk;
  std::size_t executed_count = 0;

  std::size_t remaining() const { return active_chunk.size() - std::min(executed_count, active_chunk.size()); }
};

/// d = ceil(delta / dt), with an epsilon so exact multiples stay put.
inline int steps_of_delay(double delta, double control_period) {
  require(std::isfinite(delta) && delta >= 0.0, "steps_of_delay: delay must be >= 0");
  require(std::isfinite(control_period) && control_period > 0.0, "steps_of_delay: control period must be > 0");
  return static_cast<int>(std::ceil(delta / control_period - kDelayEpsilon));
}

/// g(rho) = rho (e^rho - 1) / (e - 1)
inline double decay_g(double rho) {
  require(rho >= 0.0 && rho <= 1.0, "decay_g: rho must be in [0,1]");
  static const double denom = std::expm1(1.0);
  return rho * std::expm1(rho) / denom;
}

inline std::vector<double> fusion_weights(int d, int L, int horizon) {
  require(d >= 0 && horizon >= 0, "fusion_weights: d and horizon must be >= 0");
  require(d <= L, "fusion_weights: delay steps d exceed fusion end L");
  require(L <= horizon, "fusion_weights: fusion end L exceeds horizon");
  std::vector<double> w(static_cast<std::size_t>(horizon), 0.0);
  for (int i = 0; i < horizon; ++i) {
    if (i < d) {
      w[i] = 1.0;
    } else if (i < L) {
      const double rho = static_cast<double>(i - d) / static_cast<double>(L - d);
      w[i] = 1.0 - decay_g(rho);
    }
  }
  return w;
}

/// Default fusion end: L = d + min(horizon - d, window).
inline int default_fusion_end(int d, int horizon, int window = 8) {
  require(d >= 0 && window >= 0 && horizon >= 0, "default_fusion_end: negative argument");
  d = std::min(d, horizon);
  return d + std::min(horizon - d, window);
}

/// Blend per index: w_i * remain_i + (1 - w_i) * fresh_i. Indices past the
/// end of `remain` must carry weight 0.
inline ActionChunk fuse_chunks(const ActionChunk& remain, const ActionChunk& fresh, const std::vector<double>& weights) {
  fresh.validate();
  require(weights.size() == fresh.size(), "fuse_chunks: weights length must equal fresh chunk length");
  ActionChunk out = fresh;
  for (std::size_t i = 0; i < fresh.size(); ++i) {
    const double w = weights[i];
    require(w >= 0.0 && w <= 1.0, "fuse_chunks: weight outside [0,1]");
    if (w == 0.0) continue;
    require(i < remain.size(), "fuse_chunks: nonzero weight at index " + std::to_string(i) +
                                   " where no remaining old action exists");
    if (w == 1.0) {
      out[i] = remain[i];
      continue;
    }
    for (int k = 0; k < pose::kActionDim; ++k) out[i][k] = w * remain[i][k] + (1.0 - w) * fresh[i][k];
  }
  return out;
}

/// Old chunk actions from index s onward.
inline ActionChunk remaining_actions(const ActionChunk& old_chunk, std::size_t s) {
  ActionChunk r;
  r.model_hz = old_chunk.model_hz;
  if (s < old_chunk.size()) r.actions.assign(old_chunk.actions.begin() + static_cast<long>(s), old_chunk.actions.end());
  return r;
}

/// Bounded FIFO of recent inference delays (seconds).
class DelayQueue {
 public:
  explicit DelayQueue(std::size_t capacity = 10, double cold_start_delay = 0.0)
      : capacity_(capacity), cold_start_(cold_start_delay) {
    require(capacity >= 1, "DelayQueue: capacity must be positive");
    require(cold_start_delay >= 0.0, "DelayQueue: cold-start delay must be >= 0");
  }

  void push(double delay) {
    require(std::isfinite(delay) && delay >= 0.0, "DelayQueue: delays must be >= 0");
    if (delays_.size() == capacity_) delays_.pop_front();
    delays_.push_back(delay);
  }

  /// max(Q); the cold-start delay while empty.
  double estimate() const {
    if (delays_.empty()) return cold_start_;
    return *std::max_element(delays_.begin(), delays_.end());
  }

  bool empty() const { return delays_.empty(); }
  std::size_t size() const { return delays_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<double>& contents() const { return delays_; }

 private:
  std::size_t capacity_;
  double cold_start_;
  std::deque<double> delays_;
};

inline double estimate_delay(const DelayQueue& q) { return q.estimate(); }

/// Everything decided for one fusion, in control steps of the fresh chunk.
struct FusionPlan {
  int d_requested = 0;  // from the delay estimate
  int d = 0;            // after clipping to the available overlap
  int L = 0;
  std::vector<double> weights;
};

/// Weights for a fresh chunk of length `horizon` aligned so fresh index i
/// matches old index s + i. Overlap ends where the old chunk runs out.
inline FusionPlan plan_fusion(double estimated_delay, double control_period, std::size_t old_len, std::size_t s,
                              std::size_t horizon, int window) {
  FusionPlan p;
  p.d_requested = steps_of_delay(estimated_delay, control_period);
  const int h = static_cast<int>(horizon);
  const int overlap = static_cast<int>(s < old_len ? old_len - s : 0);
  const int limit = std::min(h, overlap);
  p.d = std::min(p.d_requested, limit);
  p.L = std::min(default_fusion_end(p.d, h, window), limit);
  p.weights = fusion_weights(p.d, p.L, h);
  return p;
}

}  // namespace wam::schedule
