// wam: simulator, inference-stack table, and inspection tools.
// Exit codes: 0 success, 1 runtime failure, 2 usage.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "wam/attention_masks.hpp"
#include "wam/chunk_schedule.hpp"
#include "wam/quant_emulation.hpp"
#include "wam/sim_harness.hpp"
#include "wam/table3.hpp"

namespace {

using namespace wam;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

signal::ActionChunk load_chunk(const std::string& path) {
  auto in = open_in(path);
  return signal::read_chunk(in);
}

void save_chunk(const std::string& path, const signal::ActionChunk& c) {
  if (path.empty() || path == "-") {
    signal::write_chunk(std::cout, c);
    return;
  }
  auto out = open_out(path);
  signal::write_chunk(out, c);
}

// Whitespace-separated rows; '#' starts a comment.
Matrix load_matrix(const std::string& path) {
  auto in = open_in(path);
  Matrix m;
  std::string line;
  while (std::getline(in, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(record::number(tok));
    if (row.empty()) continue;
    if (m.rows == 0) m.cols = row.size();
    require(row.size() == m.cols, path + ": ragged matrix row " + std::to_string(m.rows + 1));
    m.data.insert(m.data.end(), row.begin(), row.end());
    ++m.rows;
  }
  require(m.rows > 0, path + ": empty matrix");
  return m;
}

struct SimArgs {
  std::string config, trace, metrics, mode;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration;
  bool print_config = false;
};

int cmd_sim(const SimArgs& a) {
  sim::SimConfig cfg;
  if (!a.config.empty()) {
    auto in = open_in(a.config);
    cfg = sim::read_config(in);
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.duration) cfg.duration_s = *a.duration;
  if (!a.mode.empty()) cfg.mode = sim::detail::parse_mode(a.mode);
  if (a.print_config) {
    sim::write_config(std::cout, cfg);
    return 0;
  }
  const auto r = sim::run(cfg);
  if (!a.trace.empty()) {
    auto out = open_out(a.trace);
    sim::write_trace(out, r.trace);
  }
  if (!a.metrics.empty()) {
    auto out = open_out(a.metrics);
    sim::write_metrics_csv(out, r.metrics);
  } else {
    sim::write_metrics_csv(std::cout, r.metrics);
  }
  if (r.error) {
    std::cerr << "wam sim: " << *r.error << " (partial trace kept)\n";
    return 1;
  }
  return 0;
}

int cmd_bench(const std::string& presets) {
  std::vector<bench::PresetRow> rows;
  if (presets == "table3") {
    rows = bench::builtin_presets();
  } else {
    auto in = open_in(presets);
    rows = bench::read_presets(in);
  }
  bench::print_report(std::cout, bench::table3_report(rows));
  return 0;
}

struct FuseArgs {
  std::string old_path, fresh_path, out;
  long s = 0;
  double delay = 0.0;
  double dt = 0.0;
  int window = 8;
};

int cmd_fuse(const FuseArgs& a) {
  const auto old_chunk = load_chunk(a.old_path);
  const auto fresh = load_chunk(a.fresh_path);
  require(a.s >= 0, "fuse: --s must be >= 0");
  const double dt = a.dt > 0.0 ? a.dt : 1.0 / fresh.model_hz;
  const auto plan = schedule::plan_fusion(a.delay, dt, old_chunk.size(), static_cast<std::size_t>(a.s), fresh.size(),
                                          a.window);
  const auto fused = schedule::fuse_chunks(schedule::remaining_actions(old_chunk, static_cast<std::size_t>(a.s)),
                                           fresh, plan.weights);
  std::cerr << "d_req=" << plan.d_requested << " d=" << plan.d << " L=" << plan.L << " w=" << record::join_range(plan.weights)
            << '\n';
  save_chunk(a.out, fused);
  return 0;
}

struct SmoothArgs {
  std::string in, out;
  double control_hz = 50.0;
  signal::SavGolConfig savgol;
};

int cmd_smooth(const SmoothArgs& a) {
  const auto smoothed = signal::smooth_chunk(load_chunk(a.in), a.savgol);
  save_chunk(a.out, signal::freq_interpolate(smoothed.chunk, a.control_hz));
  return 0;
}

struct MaskArgs {
  std::string kind = "v2a", layout = "small", export_path;
  std::vector<int> counts;  // text cond frames views tokens sa
  std::vector<int> chunk_ends;
  bool decoupled = false;
};

int cmd_mask(const MaskArgs& a) {
  attention::TokenLayout layout;
  if (!a.counts.empty()) {
    require(a.counts.size() == 6, "mask: --counts takes text cond frames views tokens sa");
    layout = attention::TokenLayout{a.counts[0], a.counts[1], a.counts[2], a.counts[3], a.counts[4], a.counts[5], a.chunk_ends};
  } else if (a.layout == "small") {
    layout = attention::TokenLayout::small();
  } else {
    throw ValidationError("mask: unknown layout '" + a.layout + "' (expected small, or use --counts)");
  }
  const auto mask = a.decoupled ? attention::decoupled_mask(layout) : attention::build_mask(attention::mask_kind_from_string(a.kind), layout);
  if (!a.export_path.empty()) {
    auto out = open_out(a.export_path);
    attention::export_bitmap(out, mask);
  }
  std::cout << attention::summarize(mask);
  return 0;
}

struct QuantArgs {
  std::string in, out, blob, reference;
};

void describe(const quant::QuantLinear& q) {
  std::cout << "out_dim=" << q.out_dim << " in_dim=" << q.in_dim << " scale=" << record::fmt(q.scale)
            << " eligible=" << (quant::eligible(q.in_dim, q.out_dim) ? "yes" : "no") << '\n';
}

int cmd_quant_quantize(const QuantArgs& a) {
  const Matrix w = load_matrix(a.in);
  const auto q = quant::quantize_tensor(w);
  auto out = open_out(a.out, true);
  quant::write_blob(out, q);
  describe(q);
  const Matrix back = q.dequantize();
  double max_err = 0.0;
  for (std::size_t i = 0; i < w.data.size(); ++i) max_err = std::max(max_err, std::abs(back.data[i] - w.data[i]));
  std::cout << "max_abs_error=" << record::fmt(max_err) << '\n';
  return 0;
}

int cmd_quant_inspect(const QuantArgs& a) {
  std::ifstream in(a.blob, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + a.blob + "' for reading");
  const auto q = quant::read_blob(in);
  describe(q);
  if (!a.reference.empty()) {
    const Matrix w = load_matrix(a.reference);
    require(w.rows == static_cast<std::size_t>(q.out_dim) && w.cols == static_cast<std::size_t>(q.in_dim),
            "quant inspect: reference shape differs from blob");
    const Matrix back = q.dequantize();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      num += (back.data[i] - w.data[i]) * (back.data[i] - w.data[i]);
      den += w.data[i] * w.data[i];
    }
    std::cout << "relative_frobenius_error=" << record::fmt(den > 0.0 ? std::sqrt(num / den) : 0.0) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wam: world-action model runtime tools"};
  app.require_subcommand(1);

  SimArgs sim_args;
  auto* sim = app.add_subcommand("sim", "Run the closed-loop simulator");
  sim->add_option("--config", sim_args.config, "Config file (defaults used when omitted)");
  sim->add_option("--seed", sim_args.seed, "Override sim.seed");
  sim->add_option("--duration", sim_args.duration, "Override sim.duration_s");
  sim->add_option("--mode", sim_args.mode, "discrete_event or real_time");
  sim->add_option("--trace", sim_args.trace, "Write the event trace here");
  sim->add_option("--metrics", sim_args.metrics, "Write metrics CSV here (stdout otherwise)");
  sim->add_flag("--print-config", sim_args.print_config, "Print the effective config and exit");

  std::string presets = "table3";
  auto* bench = app.add_subcommand("bench", "Latency table for the inference-stack presets");
  bench->add_option("--presets", presets, "'table3' or a preset INI file");

  FuseArgs fuse_args;
  auto* fuse = app.add_subcommand("fuse", "Fuse a fresh chunk into the remainder of an old one");
  fuse->add_option("old", fuse_args.old_path, "Old chunk file")->required();
  fuse->add_option("fresh", fuse_args.fresh_path, "Fresh chunk file")->required();
  fuse->add_option("--s", fuse_args.s, "Old-chunk actions executed before launch");
  fuse->add_option("--delay", fuse_args.delay, "Estimated inference delay in seconds");
  fuse->add_option("--dt", fuse_args.dt, "Step period in seconds (default 1/model_hz)");
  fuse->add_option("--window", fuse_args.window, "Fusion window beyond the delay");
  fuse->add_option("-o,--out", fuse_args.out, "Output chunk file (stdout otherwise)");

  SmoothArgs smooth_args;
  auto* smooth = app.add_subcommand("smooth", "Smooth and interpolate a chunk to control rate");
  smooth->add_option("input", smooth_args.in, "Chunk file")->required();
  smooth->add_option("--control-hz", smooth_args.control_hz, "Target control rate");
  smooth->add_option("--window", smooth_args.savgol.window, "Savitzky-Golay window");
  smooth->add_option("--polyorder", smooth_args.savgol.polyorder, "Savitzky-Golay order");
  smooth->add_option("-o,--out", smooth_args.out, "Output chunk file (stdout otherwise)");

  MaskArgs mask_args;
  auto* mask = app.add_subcommand("mask", "Build, summarize and export attention masks");
  mask->add_option("--kind", mask_args.kind, "stage1, stage2, v2a or ar");
  mask->add_option("--layout", mask_args.layout, "Named layout (small)");
  mask->add_option("--counts", mask_args.counts, "text cond frames views tokens sa")->expected(6);
  mask->add_option("--chunk-ends", mask_args.chunk_ends, "Exclusive end frame of each AR chunk");
  mask->add_flag("--decoupled", mask_args.decoupled, "Decoupled video/action mask");
  mask->add_option("--export", mask_args.export_path, "Write the bitmap here");

  QuantArgs quant_args;
  auto* quant = app.add_subcommand("quant", "FP8 (E4M3) weight emulation");
  quant->require_subcommand(1);
  auto* quantize = quant->add_subcommand("quantize", "Quantize a text matrix into a blob");
  quantize->add_option("input", quant_args.in, "Matrix text file")->required();
  quantize->add_option("-o,--out", quant_args.out, "Blob file")->required();
  auto* inspect = quant->add_subcommand("inspect", "Describe a blob");
  inspect->add_option("blob", quant_args.blob, "Blob file")->required();
  inspect->add_option("--reference", quant_args.reference, "Matrix to compare against");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "wam: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*sim) return cmd_sim(sim_args);
    if (*bench) return cmd_bench(presets);
    if (*fuse) return cmd_fuse(fuse_args);
    if (*smooth) return cmd_smooth(smooth_args);
    if (*mask) return cmd_mask(mask_args);
    if (*quantize) return cmd_quant_quantize(quant_args);
    if (*inspect) return cmd_quant_inspect(quant_args);
  } catch (const std::exception& e) {
    std::cerr << "wam: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
