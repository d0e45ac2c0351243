// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Oracles here are written independently of the library where a value is derived.

#include <algorithm>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "wam/attention_masks.hpp"
#include "wam/chunk_schedule.hpp"
#include "wam/denoise_runtime.hpp"
#include "wam/pose_actions.hpp"
#include "wam/quant_emulation.hpp"
#include "wam/signal_pipeline.hpp"
#include "wam/sim_harness.hpp"
#include "wam/table3.hpp"
#include "wam/toy_world_model.hpp"

using namespace wam;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
  void expect(bool ok, const std::string& why) {
    if (!ok) fail(why);
  }
};

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

// ---- 1 ---------------------------------------------------------------------

Outcome fusion_math() {
  using Big = boost::multiprecision::cpp_bin_float_50;
  Outcome o;
  const Big e1 = boost::multiprecision::exp(Big(1)) - 1;
  double worst = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double rho = i / 1000.0;
    const Big r(rho);
    const double want = static_cast<double>(r * (boost::multiprecision::exp(r) - 1) / e1);
    worst = std::max(worst, std::abs(schedule::decay_g(rho) - want));
  }
  o.expect(worst <= 1e-12, "decay_g error " + num(worst));

  std::mt19937_64 g(101);
  for (int t = 0; t < 10000 && o.pass; ++t) {
    const int h = std::uniform_int_distribution<int>(0, 64)(g);
    const int L = std::uniform_int_distribution<int>(0, h)(g);
    const int d = std::uniform_int_distribution<int>(0, L)(g);
    const auto w = schedule::fusion_weights(d, L, h);
    if (w.size() != static_cast<std::size_t>(h)) o.fail("wrong weight count");
    for (int i = 0; i < h && o.pass; ++i) {
      double want;
      if (i < d) want = 1.0;
      else if (i >= L) want = 0.0;
      else {
        const double rho = static_cast<double>(i - d) / (L - d);
        want = 1.0 - rho * std::expm1(rho) / std::expm1(1.0);
      }
      const bool boundary = i < d || i >= L;
      if (boundary ? w[i] != want : std::abs(w[i] - want) > 1e-12)
        o.fail("weight mismatch at d=" + std::to_string(d) + " L=" + std::to_string(L) + " i=" + std::to_string(i));
      if (i > 0 && w[i] > w[i - 1]) o.fail("weights not monotone");
    }
  }
  if (o.pass) o.detail = "max decay_g error " + num(worst, 3) + ", 10^4 triples";
  return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome relative_round_trip() {
  using namespace pose;
  Outcome o;
  std::mt19937_64 g(202);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto quat = [&] {
    double w = n(g), x = n(g), y = n(g), z = n(g);
    const double s = std::sqrt(w * w + x * x + y * y + z * z);
    return Quat{w / s, x / s, y / s, z / s};
  };
  const GripperRange range{0.0, 0.08};
  double pos = 0.0, ang = 0.0, six = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const Pose a({u(g), u(g), u(g)}, quat(), 0.04 * (u(g) + 1.0));
    const Pose r({u(g), u(g), u(g)}, quat(), 0.04 * (u(g) + 1.0));
    const Pose back = to_absolute(to_relative(a, r, range).action, r, range);
    pos = std::max(pos, (back.position() - a.position()).norm());
    ang = std::max(ang, rotation_angle_between(back.matrix(), a.matrix()));

    const Mat3 m = a.matrix();
    const Rot6d r6 = matrix_to_rot6d(m);
    six = std::max(six, (rot6d_to_matrix(r6) - m).cwiseAbs().maxCoeff());
    const Rot6d again = matrix_to_rot6d(rot6d_to_matrix(r6));
    for (int k = 0; k < 6; ++k) six = std::max(six, std::abs(again[k] - r6[k]));
  }
  o.expect(pos <= 1e-9, "position error " + num(pos));
  o.expect(ang <= 1e-6, "rotation error " + num(ang));
  o.expect(six <= 1e-9, "6D round trip error " + num(six));
  if (o.pass) o.detail = "10^5 pairs, pos " + num(pos, 2) + ", angle " + num(ang, 2) + ", 6D " + num(six, 2);
  return o;
}

// ---- 3 ---------------------------------------------------------------------

// The sampler steps t from 1 down to 0 with x += (t_next - t) v, i.e. it Euler-
// integrates dx/dtau = -v over unit time. Running it on -f therefore integrates
// f forward, which is what exact_endpoint(f, x0, 1) solves.
double sampler_euler(const toy::LinearField& f, double x0, int steps) {
  const toy::LinearField neg{-f.a, -f.b};
  const toy::CoupledField field(neg, neg, 1, 1);
  denoise::SamplerConfig cfg;
  cfg.total_steps = steps;
  cfg.joint_prefix_N = steps;
  cfg.timeshift_video = 1.0;
  cfg.timeshift_action = 1.0;
  return denoise::sample_joint(field, {{x0}, {x0}}, cfg).state.action[0];
}

double closed_form(const toy::LinearField& f, double x0) {
  return f.a == 0.0 ? x0 + f.b : std::exp(f.a) * x0 + (std::exp(f.a) - 1.0) * f.b / f.a;
}

Outcome sampler_convergence() {
  Outcome o;
  struct Case {
    toy::LinearField f;
    double x0;
  };
  // The two analytic examples of exact_endpoint, plus a growing field for the rate.
  const Case cases[] = {{{-1.0, 0.0}, 1.0}, {{-1.0, 1.0}, 0.0}, {{0.8, -0.3}, -1.2}};
  std::string orders, finals;
  for (const auto& c : cases) {
    const double exact = closed_form(c.f, c.x0);
    double prev = std::abs(sampler_euler(c.f, c.x0, 10) - exact);
    for (int steps : {20, 40, 80}) {
      const double e = std::abs(sampler_euler(c.f, c.x0, steps) - exact);
      const double p = std::log2(prev / e);
      orders += (orders.empty() ? "" : "/") + num(p, 3);
      o.expect(p >= 0.8 && p <= 1.2, "order " + num(p) + " at " + std::to_string(steps) + " steps");
      prev = e;
    }
    if (&c != &cases[2]) {
      const double e1000 = std::abs(sampler_euler(c.f, c.x0, 1000) - exact);
      finals += (finals.empty() ? "" : ", ") + num(e1000, 3);
      o.expect(e1000 <= 1e-3, "1000-step error " + num(e1000));
    }
  }
  if (o.pass) o.detail = "orders " + orders + "; 1000-step errors " + finals;
  return o;
}

// ---- 4 ---------------------------------------------------------------------

denoise::LatentState random_state(std::size_t vdim, std::size_t adim, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n;
  denoise::LatentState s;
  s.video.resize(vdim);
  s.action.resize(adim);
  for (auto& v : s.video) v = n(g);
  for (auto& v : s.action) v = n(g);
  return s;
}

Outcome cache_soundness() {
  Outcome o;
  const auto init = random_state(4, 5, 404);
  const toy::CoupledField curved({-1.1, 0.5}, {0.6, -0.3}, 4, 5);
  denoise::SamplerConfig base;
  base.total_steps = 30;
  base.joint_prefix_N = 30;
  const auto plain = denoise::sample_joint(curved, init, base);

  auto hi = base;
  hi.cache_threshold_gamma = 1.01;
  hi.cache_length_k = 6;
  auto k0 = base;
  k0.cache_threshold_gamma = -1.0;
  k0.cache_length_k = 0;
  for (const auto& c : {hi, k0}) {
    const auto r = denoise::sample_joint(curved, init, c);
    o.expect(r.state.video == plain.state.video && r.state.action == plain.state.action,
             "gated cache changed the trajectory");
  }

  const toy::CoupledField flat({0.0, 0.4}, {0.0, -0.9}, 4, 5);
  const auto ref = denoise::sample_joint(flat, init, base);
  std::string counts;
  for (int k : {1, 2, 3, 4, 6}) {
    auto c = base;
    c.cache_threshold_gamma = 0.99;
    c.cache_length_k = k;
    const auto r = denoise::sample_joint(flat, init, c);
    // First step is a real evaluation, then every (k+1)-th.
    const int predicted = 1 + (30 - 1 + k) / (k + 1);
    o.expect(std::abs(r.stats.joint_evals - predicted) <= 1,
             "k=" + std::to_string(k) + " evals " + std::to_string(r.stats.joint_evals));
    double drift = 0.0;
    for (std::size_t i = 0; i < 5; ++i) drift = std::max(drift, std::abs(r.state.action[i] - ref.state.action[i]));
    for (std::size_t i = 0; i < 4; ++i) drift = std::max(drift, std::abs(r.state.video[i] - ref.state.video[i]));
    o.expect(drift < 1e-12, "endpoint drift " + num(drift));
    counts += (counts.empty() ? "" : ",") + std::to_string(r.stats.joint_evals);
  }
  if (o.pass) o.detail = "bit-identical when gated off; evals k=1..6: " + counts + " of 30";
  return o;
}

// ---- 5 ---------------------------------------------------------------------

Outcome v2a_equivalence() {
  Outcome o;
  const auto init = random_state(3, 4, 505);
  const toy::LinearField vf{-0.6, 0.2}, af{0.5, -0.15};
  denoise::SamplerConfig cfg;
  cfg.total_steps = 24;
  cfg.joint_prefix_N = 24;

  const toy::CoupledField free(vf, af, 3, 4);
  const auto joint = denoise::sample_joint(free, init, cfg);
  double worst = 0.0;
  for (int n : {0, 12, 24}) {
    cfg.joint_prefix_N = n;
    const auto r = denoise::sample_v2a(free, init, cfg);
    for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(r.state.action[i] - joint.state.action[i]));
  }
  o.expect(worst <= 1e-9, "zero-coupling divergence " + num(worst));

  const std::vector<double> coupling{0.4, -0.3, 0.2, 0.1, 0.6, -0.5, 0.3, 0.0, -0.2, 0.7, 0.1, -0.4};
  const toy::CoupledField tied(vf, af, 3, 4, coupling);
  cfg.joint_prefix_N = 24;
  const auto tj = denoise::sample_joint(tied, init, cfg);
  const auto full = denoise::sample_v2a(tied, init, cfg);
  o.expect(full.state.action == tj.state.action && full.state.video == tj.state.video,
           "N=steps differs from the joint sampler");

  cfg.joint_prefix_N = 0;
  const auto frozen = denoise::sample_v2a(tied, init, cfg);
  // Frozen context: the video stays at its initial value for every action step.
  const auto t = denoise::shifted_schedule(24, cfg.timeshift_action);
  std::vector<double> x(init.action.begin(), init.action.end());
  for (int i = 0; i < 24; ++i)
    for (std::size_t r = 0; r < 4; ++r) {
      double drive = af.a * x[r] + af.b;
      for (std::size_t c = 0; c < 3; ++c) drive += coupling[r * 3 + c] * init.video[c];
      x[r] += (t[i + 1] - t[i]) * drive;
    }
  double fz = 0.0;
  for (std::size_t r = 0; r < 4; ++r) fz = std::max(fz, std::abs(frozen.state.action[r] - x[r]));
  o.expect(fz <= 1e-9, "frozen-context oracle error " + num(fz));
  if (o.pass) o.detail = "zero-coupling gap " + num(worst, 2) + ", frozen-context gap " + num(fz, 2);
  return o;
}

// ---- 6 ---------------------------------------------------------------------

using attention::MaskKind;
using attention::TokenRole;

Matrix gaussian(std::mt19937_64& g, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (auto& v : m.data) v = n(g);
  return m;
}

Outcome mask_semantics(const std::string& golden_path) {
  Outcome o;
  std::mt19937_64 g(606);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(g); };
  for (int trial = 0; trial < 100 && o.pass; ++trial) {
    attention::TokenLayout l;
    l.n_text = pick(0, 3);
    l.n_cond = pick(0, 2);
    l.frames_K = pick(1, 4);
    l.views_V = pick(1, 2);
    l.tokens_per_frame_per_view = pick(1, 3);
    l.actions_per_frame_Sa = pick(1, 3);
    for (int f = 1; f <= l.frames_K; ++f)
      if (f == l.frames_K || pick(0, 1)) l.chunk_ends.push_back(f);

    const auto v2a = attention::build_mask(MaskKind::NonAR_V2A, l);
    const std::size_t n = v2a.size();
    const Matrix q = gaussian(g, n, 4);
    Matrix k = gaussian(g, n, 4), v = gaussian(g, n, 3);
    const auto before = attention::masked_attention_reference(q, k, v, v2a);
    for (std::size_t i = 0; i < n; ++i)
      if (v2a.tokens()[i].role == TokenRole::Action)
        for (std::size_t c = 0; c < 4; ++c) {
          k(i, c) = 1e3 * (c + 1.0);
          v(i, c % 3) = -1e3;
        }
    const auto after = attention::masked_attention_reference(q, k, v, v2a);
    for (std::size_t i = 0; i < n; ++i)
      if (v2a.tokens()[i].role != TokenRole::Action)
        for (std::size_t c = 0; c < 3; ++c)
          if (before.values(i, c) != after.values(i, c)) o.fail("V2A video output moved with action tokens");

    const auto ar = attention::build_mask(MaskKind::AR, l);
    const std::size_t na = ar.size();
    const int cut = pick(0, l.num_chunks() - 1);
    const Matrix qa = gaussian(g, na, 4);
    Matrix ka = gaussian(g, na, 4), va = gaussian(g, na, 3);
    const auto b2 = attention::masked_attention_reference(qa, ka, va, ar);
    for (std::size_t i = 0; i < na; ++i)
      if (ar.tokens()[i].chunk >= cut)
        for (std::size_t c = 0; c < 4; ++c) {
          ka(i, c) = -ka(i, c) * 5.0;
          va(i, c % 3) += 11.0;
        }
    const auto a2 = attention::masked_attention_reference(qa, ka, va, ar);
    for (std::size_t i = 0; i < na; ++i)
      if (ar.tokens()[i].chunk < cut)
        for (std::size_t c = 0; c < 3; ++c)
          if (b2.values(i, c) != a2.values(i, c)) o.fail("AR output of an earlier chunk moved");
  }

  // Small layout: text 0-1, cond 2, video 3-6, action 7-10. Video and context
  // see context and video; actions see everything.
  std::vector<std::string> reference;
  for (int q = 0; q < 11; ++q) {
    std::string row;
    for (int k = 0; k < 11; ++k) row += (q >= 7 || k < 7) ? '1' : '0';
    reference.push_back(row);
  }
  std::stringstream exported;
  attention::export_bitmap(exported, attention::build_mask(MaskKind::NonAR_V2A, attention::TokenLayout::small()));
  o.expect(attention::read_bitmap(exported) == reference, "small-layout V2A mask differs from reference");
  std::ifstream golden(golden_path);
  o.expect(static_cast<bool>(golden), "cannot open " + golden_path);
  if (golden) o.expect(attention::read_bitmap(golden) == reference, "golden file differs from reference");

  for (int depth = 4; depth <= 128; ++depth) {
    const auto s = attention::hbridge_schedule(depth);
    const int edge = static_cast<int>(std::ceil(depth / 4.0));
    for (int i = 0; i < depth; ++i)
      if (s.joint_flags[i] != (i >= edge && i < depth - edge)) o.fail("hbridge mismatch at depth " + std::to_string(depth));
  }
  if (o.pass) o.detail = "100 random layouts bit-exact, golden 11x11 match, depths 4-128";
  return o;
}

// ---- 7 ---------------------------------------------------------------------

Outcome table3() {
  Outcome o;
  const auto rows = bench::table3_report(bench::builtin_presets());
  o.expect(rows.size() == 6, "expected six rows");
  if (!o.pass) return o;
  const double base = rows[0].latency_s;
  double worst_ratio = 0.0, worst_residual = 0.0;
  for (const auto& r : rows) {
    // Own arithmetic: frequency and speedup follow from latency.
    o.expect(std::abs(r.frequency_hz - 1.0 / r.latency_s) <= 1e-12, r.name + " frequency inconsistent");
    o.expect(std::abs(r.speedup - base / r.latency_s) <= 1e-12, r.name + " speedup inconsistent");
    const double reported_ratio = 4.90 / r.reported_latency_s;
    worst_ratio = std::max(worst_ratio, std::abs(reported_ratio / r.reported_speedup - 1.0));
    const double residual = r.latency_s / r.reported_latency_s - 1.0;
    worst_residual = std::max(worst_residual, std::abs(residual));
  }
  o.expect(worst_ratio <= 0.005, "reported ratio inconsistency " + num(100 * worst_ratio) + "%");
  o.expect(worst_residual <= 0.05, "latency residual " + num(100 * worst_residual) + "%");
  const auto& first = rows.front();
  const auto& last = rows.back();
  o.expect(std::abs(first.latency_s - 4.90) <= 0.005 && std::abs(first.frequency_hz - 0.20) <= 0.005 &&
               first.speedup == 1.0,
           "baseline row off");
  o.expect(std::abs(last.latency_s - 0.09) <= 0.005 && std::abs(last.frequency_hz / 11.11 - 1) <= 0.005 &&
               std::abs(last.speedup / 54.4 - 1) <= 0.005,
           "V2A row off: " + num(last.latency_s) + " s, " + num(last.speedup) + "x");
  if (o.pass)
    o.detail = "max latency residual " + num(100 * worst_residual, 2) + "% (30-step row " +
               num(100 * rows[1].latency_residual, 2) + "%), final " + num(last.speedup, 4) + "x";
  return o;
}

// ---- 8 ---------------------------------------------------------------------

Outcome closed_loop() {
  Outcome o;
  double on_sum = 0.0, off_sum = 0.0;
  int worse = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    sim::SimConfig c;
    c.seed = seed;
    c.duration_s = 10.0;
    o.expect(c.nominal_delay() > 0.0, "latency must be nonzero");
    const auto on = sim::run_discrete_event(c);
    c.fusion.enabled = false;
    const auto off = sim::run_discrete_event(c);
    if (on.metrics.max_boundary_jump > off.metrics.max_boundary_jump) ++worse;
    on_sum += on.metrics.mean_boundary_jump;
    off_sum += off.metrics.mean_boundary_jump;
  }
  const double reduction = 1.0 - on_sum / off_sum;
  o.expect(worse == 0, std::to_string(worse) + " seeds with a larger max jump under fusion");
  o.expect(reduction >= 0.25, "mean reduction " + num(100 * reduction) + "%");
  if (o.pass) o.detail = "20 paired seeds, mean boundary jump reduced " + num(100 * reduction, 3) + "%";
  return o;
}

// ---- 9 ---------------------------------------------------------------------

Outcome real_time_replay() {
  Outcome o;
  sim::SimConfig c;
  c.seed = 909;
  c.duration_s = 10.0;
  c.mode = sim::SimMode::RealTime;
  const auto rt = sim::run(c);
  o.expect(!rt.error, rt.error ? *rt.error : "");
  o.expect(static_cast<long>(rt.trace.all<sim::TickEvent>().size()) == static_cast<long>(c.total_ticks()), "missing ticks");
  o.expect(rt.metrics.max_tick_jitter_s < c.control_period(), "tick jitter " + num(rt.metrics.max_tick_jitter_s));

  auto replay = c;
  replay.mode = sim::SimMode::DiscreteEvent;
  replay.replay_delays = sim::measured_delays(rt.trace);
  const auto de = sim::run(replay);
  const auto a = sim::fusion_decisions(rt.trace);
  const auto b = sim::fusion_decisions(de.trace);
  o.expect(a.size() == b.size(), "decision counts differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i)
    if (!sim::same_decision(a[i], b[i])) ++mismatched;
  o.expect(mismatched == 0, std::to_string(mismatched) + " mismatched decisions");
  if (o.pass)
    o.detail = std::to_string(a.size()) + " decisions matched, max jitter " +
               num(1e3 * rt.metrics.max_tick_jitter_s, 3) + " ms";
  return o;
}

// ---- 10 --------------------------------------------------------------------

Outcome e4m3() {
  Outcome o;
  for (int b = 0; b < 256; ++b) {
    const auto byte = static_cast<std::uint8_t>(b);
    if ((b & 0x7F) == 0x7F) {
      o.expect(std::isnan(quant::decode_e4m3(byte)), "NaN encoding does not decode to NaN");
      continue;
    }
    // Independent decode from the bit layout.
    const int e = (b >> 3) & 0xF, m = b & 7;
    double v = e == 0 ? std::ldexp(m, -9) : std::ldexp(1.0 + m / 8.0, e - 7);
    if (b & 0x80) v = -v;
    o.expect(quant::decode_e4m3(byte) == v, "decode mismatch for byte " + std::to_string(b));
    o.expect(quant::encode_e4m3(v) == byte || (v == 0.0 && (quant::encode_e4m3(v) & 0x7F) == 0),
             "round trip failed for byte " + std::to_string(b));
  }

  std::mt19937_64 g(1010);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Matrix w = gaussian(g, 64, 64), x = gaussian(g, 64, 64);
    const Matrix y = quant::quant_matmul(x, quant::quantize_tensor(w));
    double num2 = 0.0, den = 0.0;
    for (std::size_t i = 0; i < 64; ++i)
      for (std::size_t j = 0; j < 64; ++j) {
        double exact = 0.0;
        for (std::size_t k = 0; k < 64; ++k) exact += x(i, k) * w(j, k);
        num2 += (y(i, j) - exact) * (y(i, j) - exact);
        den += exact * exact;
      }
    worst = std::max(worst, std::sqrt(num2 / den));
  }
  o.expect(worst <= 0.05, "matmul relative error " + num(worst));

  std::uniform_int_distribution<int> dim(1, 16384);
  for (int i = 0; i < 10000; ++i) {
    const int a = dim(g), b = dim(g);
    if (quant::eligible(a, b) != (a % 16 == 0 && b % 16 == 0)) o.fail("eligibility mismatch");
  }
  if (o.pass) o.detail = "256 encodings, worst matmul error " + num(worst, 3);
  return o;
}

// ---- 11 --------------------------------------------------------------------

Outcome smoothing() {
  Outcome o;
  std::mt19937_64 g(1111);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int order = 0; order <= 5; ++order)
    for (int window = std::max(3, order % 2 == 0 ? order + 1 : order + 2); window <= 15; window += 2) {
      const auto w = signal::savgol_coefficients(window, order);
      for (int deg = 0; deg <= order; ++deg) {
        std::vector<double> c(deg + 1);
        for (auto& x : c) x = u(g);
        std::vector<signal::Action> xs(41);
        for (int i = 0; i < 41; ++i) {
          const double t = (i - 20) / 20.0;
          double p = 0.0;
          for (int k = deg; k >= 0; --k) p = p * t + c[k];
          xs[i].fill(p);
        }
        const auto ys = signal::savgol_filter(xs, w);
        for (int i = window / 2; i < 41 - window / 2; ++i) worst = std::max(worst, std::abs(ys[i][0] - xs[i][0]));
      }
    }
  o.expect(worst <= 1e-9, "polynomial preservation error " + num(worst));

  double slack = 0.0;
  for (int i = 0; i < 1000; ++i) {
    signal::ActionChunk chunk;
    chunk.model_hz = std::uniform_real_distribution<double>(1.0, 30.0)(g);
    const int h = std::uniform_int_distribution<int>(1, 48)(g);
    for (int k = 0; k < h; ++k) {
      signal::Action a;
      for (auto& v : a) v = u(g);
      chunk.actions.push_back(a);
    }
    const double control = chunk.model_hz * std::uniform_real_distribution<double>(1.0, 20.0)(g);
    const auto out = signal::freq_interpolate(chunk, control);
    const double gap = std::abs(out.size() / control - h / chunk.model_hz);
    slack = std::max(slack, gap * control);
    if (gap > 1.0 / control + 1e-12) o.fail("duration drift of " + num(gap) + " s");
  }
  if (o.pass)
    o.detail = "max preservation error " + num(worst, 2) + ", max duration gap " + num(slack, 3) + " periods";
  return o;
}

// ---- 12 --------------------------------------------------------------------

Outcome timestep_sampling() {
  Outcome o;
  denoise::SamplerConfig cfg;
  cfg.timeshift_video = 6.0;
  cfg.timeshift_action = 1.0;
  Rng rng(1212);
  constexpr int n = 100000;
  std::vector<double> tv(n), ta(n);
  for (int i = 0; i < n; ++i) std::tie(tv[i], ta[i]) = denoise::sample_train_timesteps(rng, cfg);
  std::sort(ta.begin(), ta.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i)
    ks = std::max({ks, (i + 1.0) / n - ta[i], ta[i] - static_cast<double>(i) / n});
  std::sort(tv.begin(), tv.end());
  const double median = 0.5 * (tv[n / 2 - 1] + tv[n / 2]);
  o.expect(ks < 0.02, "KS statistic " + num(ks));
  o.expect(std::abs(median - 6.0 / 7.0) <= 0.01, "shifted median " + num(median));
  if (o.pass) o.detail = "KS " + num(ks, 3) + ", median " + num(median, 5);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string source_dir = argc > 1 ? argv[1] : WAM_SOURCE_DIR;
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0 means no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "fusion weight math", 5.0, fusion_math},
      {2, "relative-action round trip", 10.0, relative_round_trip},
      {3, "sampler convergence", 5.0, sampler_convergence},
      {4, "cache soundness", 0.0, cache_soundness},
      {5, "V2A equivalence", 0.0, v2a_equivalence},
      {6, "mask semantics", 0.0, [&] { return mask_semantics(source_dir + "/tests/golden/mask_v2a_small.txt"); }},
      {7, "inference-stack latency table", 0.0, table3},
      {8, "closed-loop discontinuity", 30.0, closed_loop},
      {9, "real-time replay", 0.0, real_time_replay},
      {10, "E4M3 emulation", 0.0, e4m3},
      {11, "smoothing", 0.0, smoothing},
      {12, "timestep sampling", 0.0, timestep_sampling},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0.0 && secs > c.budget_s) r.fail("took " + num(secs, 3) + " s, budget " + num(c.budget_s) + " s");
    if (!r.pass) ++failed;
    std::printf("criterion %2d: %s  %s (%s) [%.2f s]\n", c.id, r.pass ? "PASS" : "FAIL", c.name, r.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
