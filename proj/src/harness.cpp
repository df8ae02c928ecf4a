#include "tcattn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <numeric>

namespace tcattn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent streams for the data, initialisation and batch sampling of one trial.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ stream);
}

std::string fmt_real(Real v, int precision = 17) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, static_cast<double>(v));
  return buf;
}

template <typename F>
void run_indexed(std::size_t count, bool parallel, F&& body) {
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic, 1) if (parallel && count > 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TrialConfig::validate() const {
  if (steps < 1) throw InvalidInput("trial: steps must be >= 1");
  if (batch_size < 1) throw InvalidInput("trial: batch_size must be >= 1");
  if (train_size < 1 || eval_size < 1) throw InvalidInput("trial: dataset sizes must be >= 1");
  if (!(lr > 0) || !std::isfinite(lr)) throw InvalidInput("trial: lr must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw InvalidInput("trial: momentum must be in [0, 1)");
  if (!(grad_clip >= 0) || !std::isfinite(grad_clip)) throw InvalidInput("trial: grad_clip must be >= 0");
  if (!std::isfinite(gamma)) throw InvalidInput("trial: gamma must be finite");
  if (!layout.has_visual()) throw InvalidInput("trial: layout needs a visual span");
  ModelConfig m = model;
  m.num_classes = num_classes(task, layout);
  m.validate();
}

nlohmann::json trial_config_to_json(const TrialConfig& c) {
  nlohmann::json model = model_config_to_json(c.model);
  model.erase("num_classes");
  model.erase("vocab");
  nlohmann::json j = {{"task", to_string(c.task)},
                      {"layout", layout_to_json(c.layout)},
                      {"model", model},
                      {"pe_mode", to_string(c.pe_mode)},
                      {"mask_kind", to_string(c.mask_kind)},
                      {"gamma", c.gamma},
                      {"seed", c.seed},
                      {"steps", c.steps},
                      {"lr", c.lr},
                      {"momentum", c.momentum},
                      {"batch_size", c.batch_size},
                      {"train_size", c.train_size},
                      {"eval_size", c.eval_size},
                      {"grad_clip", c.grad_clip}};
  j["converge_threshold"] = c.converge_threshold ? nlohmann::json(*c.converge_threshold)
                                                 : nlohmann::json(nullptr);
  return j;
}

TrialConfig trial_config_from_json(const nlohmann::json& j, const TrialConfig& base) {
  if (!j.is_object()) throw InvalidInput("trial config JSON must be an object");
  TrialConfig c = base;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "task") c.task = parse_task(value.get<std::string>());
      else if (key == "layout") c.layout = layout_from_json(value);
      else if (key == "model") c.model = model_config_from_json(value, c.model);
      else if (key == "pe_mode") c.pe_mode = parse_pe_mode(value.get<std::string>());
      else if (key == "mask_kind") c.mask_kind = parse_mask_kind(value.get<std::string>());
      else if (key == "gamma") c.gamma = value.get<Real>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "steps") c.steps = value.get<std::size_t>();
      else if (key == "lr") c.lr = value.get<Real>();
      else if (key == "momentum") c.momentum = value.get<Real>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "train_size") c.train_size = value.get<std::size_t>();
      else if (key == "eval_size") c.eval_size = value.get<std::size_t>();
      else if (key == "grad_clip") c.grad_clip = value.get<Real>();
      else if (key == "converge_threshold") {
        if (value.is_null()) c.converge_threshold.reset();
        else c.converge_threshold = value.get<Real>();
      } else {
        throw InvalidInput("trial config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("trial config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_hash(const TrialConfig& c) {
  const std::string text = trial_config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

AttentionConfig attention_config_for(const TrialConfig& c) {
  return make_attention_config(c.model.num_heads, c.model.d_head, c.gamma, c.mask_kind, c.pe_mode);
}

nlohmann::json report_to_json(const TrialReport& r, bool include_timing) {
  nlohmann::json j = {{"note", kReportNote},
                      {"config", trial_config_to_json(r.config)},
                      {"config_hash", config_hash(r.config)},
                      {"loss_curve", r.loss_curve},
                      {"final_loss", r.final_loss},
                      {"accuracy", r.accuracy},
                      {"chance", r.chance},
                      {"converged", r.converged},
                      {"diverged", r.diverged}};
  if (include_timing) j["wall_ms"] = r.wall_ms;
  return j;
}

TrialReport train_trial(const TrialConfig& config) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();

  ModelConfig model_config = config.model;
  model_config.num_classes = num_classes(config.task, config.layout);
  model_config.vocab = vocab::kSize;

  const Dataset train = gen_task(config.task, config.layout, stream_seed(config.seed, 1),
                                 config.train_size);
  const Dataset eval = gen_task(config.task, config.layout, stream_seed(config.seed, 2),
                                config.eval_size);
  auto plan = std::make_shared<const AttentionPlan>(config.layout, attention_config_for(config));
  TinyModel model(model_config, plan, stream_seed(config.seed, 3));
  Rng sampler(stream_seed(config.seed, 4));

  TrialReport report;
  report.config = config;
  report.chance = Real{1} / static_cast<Real>(model_config.num_classes);
  report.loss_curve.reserve(config.steps);

  const std::size_t n_params = model.num_params();
  std::vector<Real> grad(n_params), velocity(n_params, Real{0});
  const Real inv_batch = Real{1} / static_cast<Real>(config.batch_size);

  for (std::size_t step = 0; step < config.steps; ++step) {
    std::fill(grad.begin(), grad.end(), Real{0});
    Real loss = 0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto& ex = train.examples[sampler.below(train.examples.size())];
      loss += model.forward_backward(ex, grad).loss;
    }
    loss *= inv_batch;
    if (!std::isfinite(loss)) {
      report.diverged = true;
      report.loss_curve.resize(config.steps, std::numeric_limits<Real>::quiet_NaN());
      break;
    }
    report.loss_curve.push_back(loss);

    Real norm2 = 0;
    for (Real& g : grad) {
      g *= inv_batch;
      norm2 += g * g;
    }
    const Real norm = std::sqrt(norm2);
    const Real clip =
        (config.grad_clip > 0 && norm > config.grad_clip) ? config.grad_clip / norm : Real{1};
    auto params = model.params();
    for (std::size_t i = 0; i < n_params; ++i) {
      velocity[i] = config.momentum * velocity[i] + clip * grad[i];
      params[i] -= config.lr * velocity[i];
    }
  }

  if (report.diverged) {
    report.final_loss = std::numeric_limits<Real>::quiet_NaN();
  } else {
    const std::size_t tail = std::min<std::size_t>(10, report.loss_curve.size());
    report.final_loss = std::accumulate(report.loss_curve.end() - static_cast<std::ptrdiff_t>(tail),
                                        report.loss_curve.end(), Real{0}) /
                        static_cast<Real>(tail);
  }

  std::size_t correct = 0;
  for (const auto& ex : eval.examples) {
    if (model.forward(ex).predicted == ex.label) ++correct;
  }
  report.accuracy = static_cast<Real>(correct) / static_cast<Real>(eval.examples.size());

  const Real threshold = config.converge_threshold
                             ? *config.converge_threshold
                             : Real{0.5} * std::log(static_cast<Real>(model_config.num_classes));
  report.converged = !report.diverged && report.final_loss < threshold;
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                             started)
                       .count();
  return report;
}

std::vector<TrialReport> gamma_sweep(const TrialConfig& base, const std::vector<Real>& gammas,
                                     bool parallel) {
  base.validate();
  if (gammas.empty()) throw InvalidInput("gamma_sweep: no gamma values");
  std::vector<TrialReport> reports(gammas.size());
  run_indexed(gammas.size(), parallel, [&](std::size_t i) {
    TrialConfig c = base;
    c.gamma = gammas[i];
    reports[i] = train_trial(c);
  });
  return reports;
}

Real median(std::vector<Real> values) {
  if (values.empty()) throw InvalidInput("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : (values[mid - 1] + values[mid]) / 2;
}

GridReport ablation_grid(const std::vector<TaskKind>& tasks, const std::vector<MaskKind>& masks,
                         const std::vector<PeMode>& pe_modes,
                         const std::vector<std::uint64_t>& seeds, const TrialConfig& base,
                         bool parallel) {
  if (tasks.empty() || masks.empty() || pe_modes.empty() || seeds.empty()) {
    throw InvalidInput("ablation_grid: every axis needs at least one value");
  }
  GridReport grid;
  for (TaskKind t : tasks)
    for (MaskKind m : masks)
      for (PeMode p : pe_modes)
        for (std::uint64_t s : seeds) grid.cells.push_back({t, m, p, s, {}});

  run_indexed(grid.cells.size(), parallel, [&](std::size_t i) {
    GridCell& cell = grid.cells[i];
    TrialConfig c = base;
    c.task = cell.task;
    c.mask_kind = cell.mask_kind;
    c.pe_mode = cell.pe_mode;
    c.seed = cell.seed;
    cell.report = train_trial(c);
  });

  for (TaskKind t : tasks) {
    std::vector<GridSummaryRow> rows;
    for (MaskKind m : masks) {
      for (PeMode p : pe_modes) {
        GridSummaryRow row{t, 0, m, p};
        std::vector<Real> acc;
        Real loss_sum = 0;
        for (const auto& cell : grid.cells) {
          if (cell.task != t || cell.mask_kind != m || cell.pe_mode != p) continue;
          acc.push_back(cell.report.accuracy);
          loss_sum += cell.report.final_loss;
          if (cell.report.converged) ++row.converged_seeds;
        }
        row.seeds = acc.size();
        row.median_accuracy = median(acc);
        row.mean_final_loss = loss_sum / static_cast<Real>(acc.size());
        rows.push_back(row);
      }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return a.median_accuracy > b.median_accuracy;
    });
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r].rank = r + 1;
    grid.summary.insert(grid.summary.end(), rows.begin(), rows.end());
  }
  return grid;
}

std::string reports_to_csv(const std::vector<TrialReport>& reports) {
  std::string out =
      "task,pe_mode,mask_kind,gamma,seed,steps,final_loss,accuracy,converged,diverged,config_hash\n";
  for (const auto& r : reports) {
    const auto& c = r.config;
    out += to_string(c.task) + ',' + to_string(c.pe_mode) + ',' + to_string(c.mask_kind) + ',' +
           fmt_real(c.gamma) + ',' + std::to_string(c.seed) + ',' + std::to_string(c.steps) + ',' +
           fmt_real(r.final_loss) + ',' + fmt_real(r.accuracy) + ',' +
           (r.converged ? "true" : "false") + ',' + (r.diverged ? "true" : "false") + ',' +
           config_hash(c) + '\n';
  }
  return out;
}

std::string grid_summary_to_csv(const GridReport& grid) {
  std::string out =
      "task,rank,mask_kind,pe_mode,median_accuracy,mean_final_loss,converged_seeds,seeds\n";
  for (const auto& r : grid.summary) {
    out += to_string(r.task) + ',' + std::to_string(r.rank) + ',' + to_string(r.mask_kind) + ',' +
           to_string(r.pe_mode) + ',' + fmt_real(r.median_accuracy) + ',' +
           fmt_real(r.mean_final_loss) + ',' + std::to_string(r.converged_seeds) + ',' +
           std::to_string(r.seeds) + '\n';
  }
  return out;
}

std::string grid_summary_table(const GridReport& grid) {
  std::string out = std::string("# ") + kReportNote + "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %4s %-16s %-15s %8s %10s  %s\n", "task", "rank", "mask",
                "pe_mode", "med_acc", "mean_loss", "status");
  out += line;
  for (const auto& r : grid.summary) {
    std::string status = "converged";
    if (r.converged_seeds < r.seeds) {
      status = "NOT CONVERGED (" + std::to_string(r.seeds - r.converged_seeds) + "/" +
               std::to_string(r.seeds) + " seeds)";
    }
    std::snprintf(line, sizeof line, "%-18s %4zu %-16s %-15s %8.4f %10.4f  %s\n",
                  to_string(r.task).c_str(), r.rank, to_string(r.mask_kind).c_str(),
                  to_string(r.pe_mode).c_str(), static_cast<double>(r.median_accuracy),
                  static_cast<double>(r.mean_final_loss), status.c_str());
    out += line;
  }
  return out;
}

}  // namespace tcattn
