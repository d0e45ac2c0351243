#pragma once

// Chunk smoothing (2x upsample -> Savitzky-Golay -> downsample) and
// resampling from the model action rate to the control rate.

#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wam/error.hpp"
#include "wam/pose_actions.hpp"
#include "wam/text_record.hpp"

namespace wam::signal {

using Action = pose::ActionVec;

struct ActionChunk {
  std::vector<Action> actions;
  double model_hz = 10.0;

  std::size_t size() const { return actions.size(); }
  const Action& operator[](std::size_t i) const { return actions[i]; }
  Action& operator[](std::size_t i) { return actions[i]; }

  void validate() const {
    require(!actions.empty(), "ActionChunk: horizon must be >= 1");
    require(std::isfinite(model_hz) && model_hz > 0.0, "ActionChunk: model_hz must be > 0");
  }
};

struct SavGolConfig {
  int window = 5;
  int polyorder = 2;

  void validate() const {
    require(window >= 3 && window % 2 == 1, "SavGolConfig: window must be odd and >= 3");
    require(polyorder >= 0 && polyorder < window, "SavGolConfig: polyorder must be in [0, window)");
  }
};

/// Center-point weights of the least-squares polynomial fit over the window.
inline std::vector<double> savgol_coefficients(int window, int polyorder) {
  SavGolConfig{window, polyorder}.validate();
  const int half = window / 2;
  // Legendre basis on offsets scaled into [-1, 1] keeps high orders well
  // conditioned; the least-squares fit itself is basis independent.
  auto legendre = [polyorder](double u, auto&& row) {
    double prev = 1.0, cur = u;
    row(0, prev);
    if (polyorder >= 1) row(1, cur);
    for (int n = 1; n < polyorder; ++n) {
      const double next = ((2 * n + 1) * u * cur - n * prev) / (n + 1);
      prev = cur;
      cur = next;
      row(n + 1, cur);
    }
  };
  Eigen::MatrixXd basis(window, polyorder + 1);
  for (int r = 0; r < window; ++r)
    legendre(static_cast<double>(r - half) / half, [&](int c, double v) { basis(r, c) = v; });
  Eigen::RowVectorXd at_center(polyorder + 1);
  legendre(0.0, [&](int c, double v) { at_center(c) = v; });
  // at_center * pinv(B) evaluates the fitted polynomial at offset 0.
  const Eigen::RowVectorXd row =
      at_center * basis.householderQr().solve(Eigen::MatrixXd::Identity(window, window));
  std::vector<double> w(row.data(), row.data() + window);
  return w;
}

inline ActionChunk upsample_2x(const ActionChunk& chunk) {
  chunk.validate();
  require(chunk.size() >= 2, "upsample_2x: chunk needs at least 2 actions");
  ActionChunk out;
  out.model_hz = chunk.model_hz * 2.0;
  out.actions.reserve(2 * chunk.size() - 1);
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    if (i > 0) {
      Action mid;
      for (int d = 0; d < pose::kActionDim; ++d) mid[d] = 0.5 * (chunk[i - 1][d] + chunk[i][d]);
      out.actions.push_back(mid);
    }
    out.actions.push_back(chunk[i]);
  }
  return out;
}

/// Reflect about the endpoints without repeating them: x[-1] = x[1].
inline std::size_t mirror_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - m);
}

/// Per-dimension convolution with mirror padding; length preserved.
inline std::vector<Action> savgol_filter(const std::vector<Action>& x, const std::vector<double>& w) {
  const long n = static_cast<long>(x.size());
  const long half = static_cast<long>(w.size()) / 2;
  std::vector<Action> y(x.size());
  for (long i = 0; i < n; ++i) {
    for (int d = 0; d < pose::kActionDim; ++d) {
      double acc = 0.0;
      for (long j = -half; j <= half; ++j) acc += w[j + half] * x[mirror_index(i + j, n)][d];
      y[i][d] = acc;
    }
  }
  return y;
}

struct SmoothResult {
  ActionChunk chunk;
  bool too_short = false;
};

inline SmoothResult smooth_chunk(const ActionChunk& chunk, const SavGolConfig& cfg) {
  chunk.validate();
  cfg.validate();
  if (chunk.size() < 2 || static_cast<int>(2 * chunk.size() - 1) < cfg.window) return {chunk, true};
  const auto up = upsample_2x(chunk);
  const auto filtered = savgol_filter(up.actions, savgol_coefficients(cfg.window, cfg.polyorder));
  SmoothResult out;
  out.chunk.model_hz = chunk.model_hz;
  out.chunk.actions.reserve(chunk.size());
  for (std::size_t i = 0; i < filtered.size(); i += 2) out.chunk.actions.push_back(filtered[i]);
  return out;
}

inline std::size_t interpolated_length(std::size_t horizon, double model_hz, double control_hz) {
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(horizon) * control_hz / model_hz));
  return n < 1 ? 1 : n;
}

/// Linear resampling onto a uniform grid spanning the first..last action.
inline ActionChunk freq_interpolate(const ActionChunk& chunk, double control_hz) {
  chunk.validate();
  require(std::isfinite(control_hz) && control_hz > 0.0, "freq_interpolate: control_hz must be > 0");
  const std::size_t h = chunk.size();
  const std::size_t n = interpolated_length(h, chunk.model_hz, control_hz);
  ActionChunk out;
  out.model_hz = control_hz;
  out.actions.resize(n);
  if (h == 1 || n == 1) {
    // Degenerate grid: a single action has no span to resample.
    for (auto& a : out.actions) a = chunk[0];
    return out;
  }
  if (n == h) {
    out.actions = chunk.actions;
    return out;
  }
  const double step = static_cast<double>(h - 1) / static_cast<double>(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j == 0) {
      out.actions[j] = chunk[0];
      continue;
    }
    if (j == n - 1) {
      out.actions[j] = chunk[h - 1];
      continue;
    }
    const double u = static_cast<double>(j) * step;
    auto lo = static_cast<std::size_t>(std::floor(u));
    if (lo >= h - 1) lo = h - 2;
    const double f = u - static_cast<double>(lo);
    for (int d = 0; d < pose::kActionDim; ++d)
      out.actions[j][d] = chunk[lo][d] + f * (chunk[lo + 1][d] - chunk[lo][d]);
  }
  return out;
}

// ---- chunk file --------------------------------------------------------------
//   chunk model_hz=<hz> length=<n>
//   followed by n lines of 10 comma-separated values; '#' starts a comment line.

inline void write_chunk(std::ostream& os, const ActionChunk& chunk) {
  os << "chunk model_hz=" << record::fmt(chunk.model_hz) << " length=" << chunk.size() << '\n';
  for (const auto& a : chunk.actions) os << record::join_range(a) << '\n';
}

inline ActionChunk read_chunk(std::istream& is) {
  std::string line;
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      return true;
    }
    return false;
  };
  require(next(), "chunk file is empty");
  const auto header = record::parse_line(line);
  require(header.tag == "chunk", "chunk file must start with a 'chunk' header");
  ActionChunk chunk;
  chunk.model_hz = record::number(header.get("model_hz"));
  const auto len = record::integer(header.get("length"));
  require(len >= 1, "chunk length must be >= 1");
  for (long long i = 0; i < len; ++i) {
    require(next(), "chunk file truncated at action " + std::to_string(i));
    const auto v = record::numbers(line, pose::kActionDim);
    Action a;
    std::copy(v.begin(), v.end(), a.begin());
    chunk.actions.push_back(a);
  }
  chunk.validate();
  return chunk;
}

}  // namespace wam::signal
