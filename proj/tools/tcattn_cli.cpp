// tcattn: render masks, print position tables, emit attention heatmaps, and
// drive gradient checks, gamma sweeps, ablation grids and the self-test.
//
// Exit status: 0 success, 1 check failure, 2 bad input, 3 I/O error.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tcattn/attention.hpp"
#include "tcattn/harness.hpp"
#include "tcattn/io.hpp"
#include "tcattn/layout.hpp"
#include "tcattn/masks.hpp"
#include "tcattn/verify.hpp"

namespace fs = std::filesystem;
using namespace tcattn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitIo = 3;

/// Thrown when a verification command finds a failing check.
struct CheckFailed {
  std::string what;
};

fs::path default_out_dir() {
  const char* env = std::getenv("TCATTN_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

/// Inline JSON when the argument starts with '{' or '[', otherwise a file path.
nlohmann::json load_json(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  const std::string text =
      (first != std::string::npos && (arg[first] == '{' || arg[first] == '[')) ? arg : read_file(arg);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(std::string("malformed JSON: ") + e.what());
  }
}

std::vector<Real> parse_real_list(const std::string& text) {
  std::vector<Real> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw InvalidInput("not a number: '" + item + "'");
    }
    if (used != item.size() || !std::isfinite(v)) throw InvalidInput("not a finite number: '" + item + "'");
    values.push_back(static_cast<Real>(v));
  }
  if (values.empty()) throw InvalidInput("empty number list");
  return values;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

int cmd_render_mask(const std::string& layout_arg, const std::string& kind_arg,
                    const std::string& out_arg, bool within_frame_causal) {
  const SequenceLayout layout = layout_from_json(load_json(layout_arg));
  const MaskKind kind = parse_mask_kind(kind_arg);
  const AttentionMask mask = build_mask(kind, layout, {.fw_block_causal_within_frame = within_frame_causal});
  const fs::path out = out_arg.empty() ? default_out_dir() / ("mask_" + to_string(kind) + ".pgm")
                                       : fs::path(out_arg);
  const std::string ext = out.extension().string();
  if (ext == ".pgm") {
    write_file_atomic(out, mask_to_pgm(mask));
  } else if (ext == ".csv") {
    write_file_atomic(out, mask_to_csv(mask));
  } else {
    throw InvalidInput("output must end in .pgm or .csv: '" + out.string() + "'");
  }
  const MaskStats stats = mask_stats(mask);
  std::cout << "allowed_count=" << stats.allowed_count << "\n";
  return kExitOk;
}

int cmd_positions(const std::string& layout_arg, double gamma, bool csv, bool strict_suffix) {
  if (!std::isfinite(gamma)) throw InvalidInput("gamma must be finite");
  const SequenceLayout layout = layout_from_json(load_json(layout_arg));
  const PositionTable table = adjusted_positions(layout, static_cast<Real>(gamma),
                                                 {.strict_monotonic_suffix = strict_suffix});
  char line[128];
  if (csv) {
    std::cout << "n,role,temporal_id,adjusted\n";
  } else {
    std::snprintf(line, sizeof line, "%6s  %-11s  %11s  %12s\n", "n", "role", "temporal_id", "adjusted");
    std::cout << line;
  }
  for (std::size_t n = 0; n < table.size(); ++n) {
    const std::string role = to_string(layout.role(static_cast<std::int64_t>(n)));
    if (csv) {
      std::snprintf(line, sizeof line, "%lld,%s,%lld,%.17g\n",
                    static_cast<long long>(table.global_ids[n]), role.c_str(),
                    static_cast<long long>(table.temporal_ids[n]),
                    static_cast<double>(table.adjusted[n]));
    } else {
      std::snprintf(line, sizeof line, "%6lld  %-11s  %11lld  %12.6g\n",
                    static_cast<long long>(table.global_ids[n]), role.c_str(),
                    static_cast<long long>(table.temporal_ids[n]),
                    static_cast<double>(table.adjusted[n]));
    }
    std::cout << line;
  }
  return kExitOk;
}

int cmd_heatmap(const std::string& config_arg, std::uint64_t seed, const std::string& out_arg,
                bool csv) {
  nlohmann::json j = load_json(config_arg);
  if (!j.is_object() || !j.contains("layout")) throw InvalidInput("heatmap config needs a 'layout' object");
  const SequenceLayout layout = layout_from_json(j.at("layout"));
  j.erase("layout");
  const AttentionConfig config = attention_config_from_json(j);
  const auto seq = static_cast<std::size_t>(layout.length());
  Rng rng(seed);
  const auto q = HeadTensor::random(config.num_heads, seq, config.d_head, rng);
  const auto k = HeadTensor::random(config.num_heads, seq, config.d_head, rng);
  const auto v = HeadTensor::random(config.num_heads, seq, config.d_head, rng);
  const AttentionResult result = attention_forward(q, k, v, layout, config);

  const fs::path dir = out_arg.empty() ? default_out_dir() : fs::path(out_arg);
  ensure_dir(dir);
  for (std::size_t h = 0; h < config.num_heads; ++h) {
    const fs::path path = dir / ("head_" + std::to_string(h) + ".pgm");
    write_file_atomic(path, weights_to_pgm(result.weights()[h]));
    std::cout << path.string() << "\n";
    if (csv) {
      const fs::path cpath = dir / ("head_" + std::to_string(h) + ".csv");
      write_file_atomic(cpath, weights_to_csv(result.weights()[h]));
      std::cout << cpath.string() << "\n";
    }
  }
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
  constexpr Real kAttentionLimit = 1e-4;
  constexpr Real kModelLimit = 1e-3;
  const TrialConfig micro = micro_trial_config();
  Real worst = 0;
  std::string worst_case;
  std::uint64_t case_seed = seed;
  for (PeMode mode : all_pe_modes()) {
    for (MaskKind kind : all_mask_kinds()) {
      const auto config = make_attention_config(micro.model.num_heads, micro.model.d_head,
                                                micro.gamma, kind, mode);
      const GradcheckResult r = attention_gradcheck(micro.layout, config, case_seed++);
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_case = to_string(mode) + "/" + to_string(kind) + " " + r.worst;
      }
    }
  }
  const GradcheckResult model = model_gradcheck(micro);
  std::printf("attention max_rel_error=%.3e (%s)\n", static_cast<double>(worst), worst_case.c_str());
  std::printf("model     max_rel_error=%.3e (%s, %zu params)\n",
              static_cast<double>(model.max_rel_error), model.worst.c_str(), model.checked);
  if (worst >= kAttentionLimit) throw CheckFailed{"attention_gradcheck"};
  if (model.max_rel_error >= kModelLimit) throw CheckFailed{"model_gradcheck"};
  return kExitOk;
}

TrialConfig load_trial(const std::string& config_arg) {
  return config_arg.empty() ? TrialConfig{} : trial_config_from_json(load_json(config_arg));
}

int cmd_sweep(const std::string& config_arg, const std::string& gammas_arg,
              const std::string& out_arg, const std::string& json_arg,
              std::optional<std::size_t> steps, std::optional<std::uint64_t> seed, bool serial) {
  TrialConfig base = load_trial(config_arg);
  if (steps) base.steps = *steps;
  if (seed) base.seed = *seed;
  base.validate();
  const std::vector<Real> gammas = gammas_arg.empty() ? kDefaultGammas : parse_real_list(gammas_arg);
  const auto reports = gamma_sweep(base, gammas, !serial);
  const std::string csv = reports_to_csv(reports);
  const fs::path out = out_arg.empty() ? default_out_dir() / "sweep.csv" : fs::path(out_arg);
  write_file_atomic(out, csv);
  if (!json_arg.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) arr.push_back(report_to_json(r));
    write_file_atomic(json_arg, arr.dump(2) + "\n");
  }
  std::cout << "# " << kReportNote << "\n" << csv;
  return kExitOk;
}

template <typename T, typename Parse>
std::vector<T> parse_axis(const nlohmann::json& j, const char* key, std::vector<T> fallback,
                          Parse parse) {
  if (!j.contains(key)) return fallback;
  std::vector<T> out;
  try {
    for (const auto& item : j.at(key)) out.push_back(parse(item));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("grid config '") + key + "': " + e.what());
  }
  return out;
}

int cmd_grid(const std::string& config_arg, const std::string& out_arg,
             std::optional<std::size_t> steps, bool serial) {
  const nlohmann::json j = config_arg.empty() ? nlohmann::json::object() : load_json(config_arg);
  if (!j.is_object()) throw InvalidInput("grid config must be a JSON object");
  TrialConfig base = j.contains("base") ? trial_config_from_json(j.at("base")) : TrialConfig{};
  if (steps) base.steps = *steps;
  base.validate();
  const auto tasks = parse_axis<TaskKind>(j, "tasks", {base.task},
                                          [](const auto& v) { return parse_task(v.template get<std::string>()); });
  const auto masks = parse_axis<MaskKind>(j, "mask_kinds", all_mask_kinds(), [](const auto& v) {
    return parse_mask_kind(v.template get<std::string>());
  });
  const auto modes = parse_axis<PeMode>(j, "pe_modes", all_pe_modes(), [](const auto& v) {
    return parse_pe_mode(v.template get<std::string>());
  });
  const auto seeds = parse_axis<std::uint64_t>(j, "seeds", {1, 2, 3},
                                               [](const auto& v) { return v.template get<std::uint64_t>(); });
  const GridReport grid = ablation_grid(tasks, masks, modes, seeds, base, !serial);

  const fs::path dir = out_arg.empty() ? default_out_dir() : fs::path(out_arg);
  ensure_dir(dir);
  std::vector<TrialReport> reports;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : grid.cells) {
    reports.push_back(c.report);
    cells.push_back(report_to_json(c.report));
  }
  write_file_atomic(dir / "grid.csv", reports_to_csv(reports));
  write_file_atomic(dir / "summary.csv", grid_summary_to_csv(grid));
  write_file_atomic(dir / "grid.json", nlohmann::json{{"note", kReportNote}, {"cells", cells}}.dump(2) + "\n");
  std::cout << grid_summary_table(grid);
  return kExitOk;
}

int cmd_selftest() {
  const SelftestReport report = run_selftest();
  std::cout << report.text();
  if (!report.ok()) throw CheckFailed{report.first_failure()};
  std::cout << "selftest: all checks passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal-aware rotary attention and frame-wise masks: tools and experiments"};
  app.require_subcommand(1);

  std::string layout_arg, kind_arg, out_arg, config_arg, gammas_arg, json_arg;
  double gamma = 1.0;
  std::uint64_t seed = 0;
  bool csv = false, within_frame_causal = false, strict_suffix = false, serial = false;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed_override;

  auto* render = app.add_subcommand("render-mask", "Write a mask as PGM or CSV");
  render->add_option("--layout", layout_arg, "Layout JSON (inline or file)")->required();
  render->add_option("--kind", kind_arg, "Mask kind: " + mask_kind_names())->required();
  render->add_option("--out", out_arg, "Output path ending in .pgm or .csv");
  render->add_flag("--fw-block-causal-within-frame", within_frame_causal,
                   "Causal reading of the frame-wise block mask inside a frame");

  auto* positions = app.add_subcommand("positions", "Print global, temporal and adjusted positions");
  positions->add_option("--layout", layout_arg, "Layout JSON (inline or file)")->required();
  positions->add_option("--gamma", gamma, "Temporal weight")->default_val(1.0);
  positions->add_flag("--csv", csv, "CSV instead of aligned columns");
  positions->add_flag("--strict-monotonic-suffix", strict_suffix,
                      "Shift post-visual temporal ids by one");

  auto* heatmap = app.add_subcommand("heatmap", "Per-head attention weights for random Q/K/V");
  heatmap->add_option("--config", config_arg, "Attention config JSON with a 'layout' object")->required();
  heatmap->add_option("--seed", seed, "Seed for Q/K/V")->default_val(0);
  heatmap->add_option("--out", out_arg, "Output directory");
  heatmap->add_flag("--csv", csv, "Also write raw weights as CSV");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the backward passes");
  gradcheck->add_option("--seed", seed, "First case seed")->default_val(0);

  auto* sweep = app.add_subcommand("sweep", "Train one trial per gamma");
  sweep->add_option("--config", config_arg, "Trial config JSON");
  sweep->add_option("--gammas", gammas_arg, "Comma-separated gamma list");
  sweep->add_option("--out", out_arg, "CSV output path");
  sweep->add_option("--json", json_arg, "Optional full JSON report path");
  sweep->add_option("--steps", steps, "Override steps");
  sweep->add_option("--seed", seed_override, "Override seed");
  sweep->add_flag("--serial", serial, "Run trials one after another");

  auto* grid = app.add_subcommand("grid", "Ablation grid over tasks, masks, pe modes and seeds");
  grid->add_option("--config", config_arg, "Grid config JSON {base, tasks, mask_kinds, pe_modes, seeds}");
  grid->add_option("--out", out_arg, "Output directory");
  grid->add_option("--steps", steps, "Override steps");
  grid->add_flag("--serial", serial, "Run trials one after another");

  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadInput;
  }

  try {
    if (*render) return cmd_render_mask(layout_arg, kind_arg, out_arg, within_frame_causal);
    if (*positions) return cmd_positions(layout_arg, gamma, csv, strict_suffix);
    if (*heatmap) return cmd_heatmap(config_arg, seed, out_arg, csv);
    if (*gradcheck) return cmd_gradcheck(seed);
    if (*sweep) return cmd_sweep(config_arg, gammas_arg, out_arg, json_arg, steps, seed_override, serial);
    if (*grid) return cmd_grid(config_arg, out_arg, steps, serial);
    if (*selftest) return cmd_selftest();
  } catch (const CheckFailed& e) {
    std::cerr << "check failed: " << e.what << "\n";
    return kExitCheckFailed;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitBadInput;
}
