#pragma once

// Simulation trace: one event per line, fixed field order.
//
//   tick   k=<int> t=<s> chunk=<id> idx=<int> stall=<0|1> err=<m> a=<10 values>
//   launch id=<id> t=<s> tick=<int> s=<int> d_est=<s>
//   finish id=<id> t=<s> delta=<s>
//   fuse   old=<id> new=<id> t=<s> s=<int> d_req=<int> d=<int> L=<int> w=<values>
//   swap   t=<s> tick=<int> old=<id> new=<id> e=<int> d=<int> cause=<word>
//
// Chunk id -1 means "no chunk yet". Metrics are recomputed from these lines.

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "wam/error.hpp"
#include "wam/signal_pipeline.hpp"
#include "wam/text_record.hpp"

namespace wam::sim {

using signal::Action;

struct TickEvent {
  long k = 0;
  double t = 0.0;
  int chunk = -1;
  long idx = 0;
  bool stall = false;
  double err = 0.0;
  Action a{};
};

struct LaunchEvent {
  int id = 0;
  double t = 0.0;
  long tick = 0;
  long s = 0;
  double d_est = 0.0;
};

struct FinishEvent {
  int id = 0;
  double t = 0.0;
  double delta = 0.0;
};

struct FusionEvent {
  int old_id = -1;
  int new_id = 0;
  double t = 0.0;
  long s = 0;
  int d_req = 0;
  int d = 0;
  int L = 0;
  std::vector<double> w;
};

/// Causes: initial (first chunk), ok (e <= d), disabled (fusion off),
/// first (cold-start estimate), spike (delay above every queued delay),
/// clipped (frozen prefix cut by the overlap), zero_delay.
struct SwapEvent {
  double t = 0.0;
  long tick = 0;
  int old_id = -1;
  int new_id = 0;
  long e = 0;
  int d = 0;
  std::string cause = "ok";
};

using Event = std::variant<TickEvent, LaunchEvent, FinishEvent, FusionEvent, SwapEvent>;

inline double event_time(const Event& e) {
  return std::visit([](const auto& x) { return x.t; }, e);
}

struct SimTrace {
  std::string header;  // free-form, written as a '#' line
  std::vector<Event> events;

  template <typename T>
  std::vector<T> all() const {
    std::vector<T> out;
    for (const auto& e : events)
      if (const auto* p = std::get_if<T>(&e)) out.push_back(*p);
    return out;
  }
};

// ---- serialization ----------------------------------------------------------------------

inline std::string to_line(const Event& ev) {
  using record::fmt;
  return std::visit(
      [](const auto& e) -> std::string {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, TickEvent>) {
          return "tick k=" + std::to_string(e.k) + " t=" + fmt(e.t) + " chunk=" + std::to_string(e.chunk) +
                 " idx=" + std::to_string(e.idx) + " stall=" + (e.stall ? "1" : "0") + " err=" + fmt(e.err) +
                 " a=" + record::join_range(e.a);
        } else if constexpr (std::is_same_v<T, LaunchEvent>) {
          return "launch id=" + std::to_string(e.id) + " t=" + fmt(e.t) + " tick=" + std::to_string(e.tick) +
                 " s=" + std::to_string(e.s) + " d_est=" + fmt(e.d_est);
        } else if constexpr (std::is_same_v<T, FinishEvent>) {
          return "finish id=" + std::to_string(e.id) + " t=" + fmt(e.t) + " delta=" + fmt(e.delta);
        } else if constexpr (std::is_same_v<T, FusionEvent>) {
          return "fuse old=" + std::to_string(e.old_id) + " new=" + std::to_string(e.new_id) + " t=" + fmt(e.t) +
                 " s=" + std::to_string(e.s) + " d_req=" + std::to_string(e.d_req) + " d=" + std::to_string(e.d) +
                 " L=" + std::to_string(e.L) + " w=" + record::join_range(e.w);
        } else {
          return "swap t=" + fmt(e.t) + " tick=" + std::to_string(e.tick) + " old=" + std::to_string(e.old_id) +
                 " new=" + std::to_string(e.new_id) + " e=" + std::to_string(e.e) + " d=" + std::to_string(e.d) +
                 " cause=" + e.cause;
        }
      },
      ev);
}

inline void write_trace(std::ostream& os, const SimTrace& trace) {
  os << "# wam-trace v1";
  if (!trace.header.empty()) os << ' ' << trace.header;
  os << '\n';
  for (const auto& e : trace.events) os << to_line(e) << '\n';
}

inline Event parse_event(const std::string& line) {
  const auto r = record::parse_line(line);
  auto i = [&](const char* k) { return record::integer(r.get(k)); };
  auto d = [&](const char* k) { return record::number(r.get(k)); };
  if (r.tag == "tick") {
    TickEvent e{i("k"), d("t"), static_cast<int>(i("chunk")), i("idx"), i("stall") != 0, d("err"), {}};
    const auto a = record::numbers(r.get("a"), pose::kActionDim);
    std::copy(a.begin(), a.end(), e.a.begin());
    return e;
  }
  if (r.tag == "launch") return LaunchEvent{static_cast<int>(i("id")), d("t"), i("tick"), i("s"), d("d_est")};
  if (r.tag == "finish") return FinishEvent{static_cast<int>(i("id")), d("t"), d("delta")};
  if (r.tag == "fuse")
    return FusionEvent{static_cast<int>(i("old")), static_cast<int>(i("new")), d("t"), i("s"),
                       static_cast<int>(i("d_req")), static_cast<int>(i("d")), static_cast<int>(i("L")),
                       record::numbers(r.get("w"))};
  if (r.tag == "swap")
    return SwapEvent{d("t"), i("tick"), static_cast<int>(i("old")), static_cast<int>(i("new")), i("e"),
                     static_cast<int>(i("d")), r.get("cause")};
  throw ValidationError("trace: unknown event '" + r.tag + "'");
}

inline SimTrace read_trace(std::istream& is) {
  SimTrace t;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string prefix = "# wam-trace v1";
      if (line.rfind(prefix, 0) == 0 && line.size() > prefix.size() + 1) t.header = line.substr(prefix.size() + 1);
      continue;
    }
    t.events.push_back(parse_event(line));
  }
  return t;
}

// ---- metrics ----------------------------------------------------------------------------------

struct Metrics {
  double max_boundary_jump = 0.0;
  double mean_boundary_jump = 0.0;
  double mean_intra_chunk_jump = 0.0;
  long stall_count = 0;
  double achieved_control_hz = 0.0;
  double tracking_rmse = 0.0;
  double max_tick_jitter_s = 0.0;  // |t_k - k dt|, zero on the virtual clock
  long swaps = 0;
  long delay_violations = 0;       // swaps with e > d
  long unattributed_violations = 0;
};

inline double jump_norm(const Action& a, const Action& b) {
  double acc = 0.0;
  for (int i = 0; i < pose::kActionDim; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

/// Pure function of the trace.
inline Metrics compute_metrics(const SimTrace& trace, double control_period) {
  Metrics m;
  const auto ticks = trace.all<TickEvent>();
  const auto swaps = trace.all<SwapEvent>();
  std::vector<long> boundary_ticks;
  for (const auto& s : swaps) {
    if (s.old_id < 0) continue;
    boundary_ticks.push_back(s.tick);
    ++m.swaps;
    if (s.cause != "ok") {
      ++m.delay_violations;
      if (s.cause != "first" && s.cause != "spike" && s.cause != "disabled") ++m.unattributed_violations;
    }
  }
  double bsum = 0.0, isum = 0.0, err2 = 0.0;
  long bn = 0, in = 0;
  for (std::size_t i = 0; i < ticks.size(); ++i) {
    const auto& tk = ticks[i];
    if (tk.stall) ++m.stall_count;
    err2 += tk.err * tk.err;
    m.max_tick_jitter_s = std::max(m.max_tick_jitter_s, std::abs(tk.t - static_cast<double>(tk.k) * control_period));
    if (i == 0) continue;
    const auto& prev = ticks[i - 1];
    const bool boundary = std::find(boundary_ticks.begin(), boundary_ticks.end(), tk.k) != boundary_ticks.end();
    const double j = jump_norm(tk.a, prev.a);
    if (boundary) {
      m.max_boundary_jump = std::max(m.max_boundary_jump, j);
      bsum += j;
      ++bn;
    } else if (tk.chunk >= 0 && tk.chunk == prev.chunk) {
      isum += j;
      ++in;
    }
  }
  m.mean_boundary_jump = bn ? bsum / static_cast<double>(bn) : 0.0;
  m.mean_intra_chunk_jump = in ? isum / static_cast<double>(in) : 0.0;
  if (!ticks.empty()) m.tracking_rmse = std::sqrt(err2 / static_cast<double>(ticks.size()));
  if (ticks.size() >= 2) {
    const double span = ticks.back().t - ticks.front().t;
    m.achieved_control_hz = span > 0.0 ? static_cast<double>(ticks.size() - 1) / span : 0.0;
  }
  return m;
}

inline void write_metrics_csv(std::ostream& os, const Metrics& m) {
  using record::fmt;
  os << "max_boundary_jump,mean_boundary_jump,mean_intra_chunk_jump,stall_count,achieved_control_hz,"
        "tracking_rmse,max_tick_jitter_s,swaps,delay_violations,unattributed_violations\n";
  os << fmt(m.max_boundary_jump) << ',' << fmt(m.mean_boundary_jump) << ',' << fmt(m.mean_intra_chunk_jump) << ','
     << m.stall_count << ',' << fmt(m.achieved_control_hz) << ',' << fmt(m.tracking_rmse) << ','
     << fmt(m.max_tick_jitter_s) << ',' << m.swaps << ',' << m.delay_violations << ',' << m.unattributed_violations
     << '\n';
}

}  // namespace wam::sim
