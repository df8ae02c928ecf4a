#pragma once

// Desk-scale ablation runner. Trains the tiny decoder on synthetic temporal
// tasks and compares position-encoding modes, mask kinds and gamma values.
// Results show direction of effect only; they say nothing about absolute
// scores on real video benchmarks.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tcattn/attention.hpp"
#include "tcattn/model.hpp"
#include "tcattn/tasks.hpp"

namespace tcattn {

inline constexpr const char* kReportNote =
    "synthetic direction-of-effect experiment; absolute video benchmark scores are not reproduced";

/// The gamma values swept by default.
inline const std::vector<Real> kDefaultGammas = {0.1, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0};

struct TrialConfig {
  TaskKind task = TaskKind::FrameOrder;
  SequenceLayout layout = build_layout(4, 4, 4, 4);
  /// num_classes is derived from task and layout; the value here is ignored.
  ModelConfig model;
  PeMode pe_mode = PeMode::DualRope;
  MaskKind mask_kind = MaskKind::FwBlockCausal;
  Real gamma = 1;
  std::uint64_t seed = 1;
  std::size_t steps = 500;
  Real lr = 0.1;
  Real momentum = 0.9;
  std::size_t batch_size = 16;
  std::size_t train_size = 512;
  std::size_t eval_size = 256;
  /// Global gradient-norm clip; 0 disables.
  Real grad_clip = 1;
  /// converged iff final loss < threshold; unset means half the chance-level loss.
  std::optional<Real> converge_threshold;

  void validate() const;
};

nlohmann::json trial_config_to_json(const TrialConfig& c);
/// Missing keys keep the defaults of `base`.
TrialConfig trial_config_from_json(const nlohmann::json& j, const TrialConfig& base = {});
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const TrialConfig& c);

/// The attention configuration a trial's model uses.
AttentionConfig attention_config_for(const TrialConfig& c);

struct TrialReport {
  TrialConfig config;
  std::vector<Real> loss_curve;
  Real final_loss = 0;
  Real accuracy = 0;
  Real chance = 0;
  bool converged = false;
  bool diverged = false;
  double wall_ms = 0;
};

/// Full report; wall_ms is left out when include_timing is false.
nlohmann::json report_to_json(const TrialReport& r, bool include_timing = true);

TrialReport train_trial(const TrialConfig& config);

/// One trial per gamma with everything else taken from `base`. Trials run in
/// parallel when `parallel` is set; the result order follows `gammas` either way.
std::vector<TrialReport> gamma_sweep(const TrialConfig& base, const std::vector<Real>& gammas,
                                     bool parallel = true);

struct GridCell {
  TaskKind task;
  MaskKind mask_kind;
  PeMode pe_mode;
  std::uint64_t seed;
  TrialReport report;
};

struct GridSummaryRow {
  TaskKind task;
  std::size_t rank = 0;
  MaskKind mask_kind;
  PeMode pe_mode;
  Real median_accuracy = 0;
  Real mean_final_loss = 0;
  std::size_t converged_seeds = 0;
  std::size_t seeds = 0;
};

struct GridReport {
  std::vector<GridCell> cells;
  /// Per task, (mask, pe) combinations ranked by median accuracy.
  std::vector<GridSummaryRow> summary;
};

GridReport ablation_grid(const std::vector<TaskKind>& tasks, const std::vector<MaskKind>& masks,
                         const std::vector<PeMode>& pe_modes,
                         const std::vector<std::uint64_t>& seeds, const TrialConfig& base,
                         bool parallel = true);

Real median(std::vector<Real> values);

/// Header + one row per report. No timing column, so output is reproducible.
std::string reports_to_csv(const std::vector<TrialReport>& reports);
std::string grid_summary_to_csv(const GridReport& grid);
/// Human-readable ranked table; non-converged rows are flagged.
std::string grid_summary_table(const GridReport& grid);

}  // namespace tcattn
