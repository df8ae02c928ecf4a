#pragma once

// Multi-head masked softmax attention with rotary (global, temporal or
// dual) position encoding, its analytic backward pass, and a scalar-loop
// oracle used to check both.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tcattn/layout.hpp"
#include "tcattn/masks.hpp"
#include "tcattn/numerics.hpp"
#include "tcattn/rope.hpp"

namespace tcattn {

/// How positions enter attention.
///   RopeOnly      rotate at n
///   TimeRopeOnly  rotate at gamma * I_t(n)
///   DualRope      rotate at n + gamma * I_t(n)
///   TimeApe       rotate at n, plus a sinusoid of I_t(n) added to Q and K rows
///   TimeRpe       rotate at n, plus a bias indexed by clip(I_t(i) - I_t(j)) on scores
/// The last two are simple stand-ins for absolute / relative temporal
/// encodings and do not follow any particular published variant.
enum class PeMode { RopeOnly, TimeRopeOnly, DualRope, TimeApe, TimeRpe };

/// "rope_only", "time_rope_only", "dual_rope", "time_ape", "time_rpe"
std::string to_string(PeMode mode);
PeMode parse_pe_mode(std::string_view name);
const std::vector<PeMode>& all_pe_modes();
std::string pe_mode_names();

/// Bias table b[d + radius] = -slope * |d| for d in [-radius, radius].
std::vector<Real> default_rpe_bias(std::size_t radius = 8, Real slope = 0.25);

struct AttentionConfig {
  std::size_t num_heads = 1;
  std::size_t d_head = 8;
  RopeConfig rope{.d_head = 8};
  MaskKind mask_kind = MaskKind::Causal;
  MaskOptions mask_options;
  TemporalIdOptions temporal_options;
  PeMode pe_mode = PeMode::DualRope;
  /// Score scale; 1/sqrt(d_head) when unset.
  std::optional<Real> scale;
  /// Odd-length table used by TimeRpe; the centre entry is difference 0.
  std::vector<Real> rpe_bias = default_rpe_bias();

  Real effective_scale() const;
  void validate() const;
};

/// Convenience constructor keeping d_head and rope.d_head in step.
AttentionConfig make_attention_config(std::size_t num_heads, std::size_t d_head, Real gamma,
                                      MaskKind mask, PeMode mode);

nlohmann::json attention_config_to_json(const AttentionConfig& config);
/// Keys: num_heads, d_head, gamma, base, mask_kind, pe_mode, scale,
/// strict_monotonic_suffix, fw_block_causal_within_frame, rpe_bias.
AttentionConfig attention_config_from_json(const nlohmann::json& j);

/// Real array [heads × seq_len × d_head], row-major.
class HeadTensor {
 public:
  HeadTensor() = default;
  HeadTensor(std::size_t heads, std::size_t seq_len, std::size_t d_head, Real fill = 0);
  HeadTensor(std::size_t heads, std::size_t seq_len, std::size_t d_head, std::vector<Real> data);

  static HeadTensor random(std::size_t heads, std::size_t seq_len, std::size_t d_head, Rng& rng,
                           Real lo = -1, Real hi = 1);

  std::size_t heads() const { return heads_; }
  std::size_t seq_len() const { return seq_len_; }
  std::size_t d_head() const { return d_head_; }

  std::span<Real> row(std::size_t h, std::size_t t) {
    return {data_.data() + (h * seq_len_ + t) * d_head_, d_head_};
  }
  std::span<const Real> row(std::size_t h, std::size_t t) const {
    return {data_.data() + (h * seq_len_ + t) * d_head_, d_head_};
  }

  std::vector<Real>& data() { return data_; }
  const std::vector<Real>& data() const { return data_; }

  bool same_shape(const HeadTensor& o) const {
    return heads_ == o.heads_ && seq_len_ == o.seq_len_ && d_head_ == o.d_head_;
  }
  bool operator==(const HeadTensor&) const = default;

 private:
  std::size_t heads_ = 0;
  std::size_t seq_len_ = 0;
  std::size_t d_head_ = 0;
  std::vector<Real> data_;
};

Real max_abs_diff(const HeadTensor& a, const HeadTensor& b);

/// Everything about one attention call that depends only on the layout and
/// configuration: rotation angles, mask, and the extra terms of the APE /
/// RPE modes. Built once and shared by every forward/backward call over
/// sequences with the same layout.
class AttentionPlan {
 public:
  AttentionPlan(const SequenceLayout& layout, const AttentionConfig& config);
  AttentionPlan(PositionTable table, AttentionMask mask, const AttentionConfig& config);

  const AttentionConfig& config() const { return config_; }
  std::size_t seq_len() const { return table_.size(); }
  const PositionTable& table() const { return table_; }
  const AttentionMask& mask() const { return mask_; }
  const FrequencyTable& freqs() const { return freqs_; }
  Real scale() const { return scale_; }
  /// Rotation position per token for the configured mode.
  const std::vector<Real>& rotation_positions() const { return positions_; }
  /// T × d_head rows added to Q and K before rotation; empty unless TimeApe.
  const Matrix& ape_rows() const { return ape_; }
  /// T × T finite score bias; empty unless TimeRpe.
  const Matrix& score_bias() const { return bias_; }

  void rotate(std::span<Real> vec, std::size_t token) const;
  void unrotate(std::span<Real> vec, std::size_t token) const;

 private:
  void init();

  AttentionConfig config_;
  PositionTable table_;
  AttentionMask mask_;
  FrequencyTable freqs_;
  Real scale_ = 1;
  std::vector<Real> positions_;
  std::vector<Real> cos_;  // T × pairs
  std::vector<Real> sin_;
  Matrix ape_;
  Matrix bias_;
};

/// Rotation positions for a mode, given ids and gamma.
std::vector<Real> rotation_positions(const PositionTable& table, PeMode mode);

/// Sinusoidal rows for TimeApe: [sin(I θ_t), cos(I θ_t)] per channel pair.
Matrix temporal_ape_rows(const PositionTable& table, const FrequencyTable& freqs);

/// Saved forward quantities needed by attention_backward.
struct AttentionState {
  std::shared_ptr<const AttentionPlan> plan;
  HeadTensor q_rot;
  HeadTensor k_rot;
  HeadTensor v;
  std::vector<Matrix> weights;
};

struct AttentionResult {
  HeadTensor output;
  AttentionState state;

  const std::vector<Matrix>& weights() const { return state.weights; }
};

struct AttentionGrads {
  HeadTensor grad_q;
  HeadTensor grad_k;
  HeadTensor grad_v;
};

AttentionResult attention_forward(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                                  std::shared_ptr<const AttentionPlan> plan);
AttentionResult attention_forward(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                                  const SequenceLayout& layout, const AttentionConfig& config);

AttentionGrads attention_backward(const AttentionState& state, const HeadTensor& grad_output);

/// Independent evaluation: one pair_score call per (i, j), explicit
/// normalisation, no shared kernels with attention_forward.
HeadTensor attention_brute_oracle(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                                  const PositionTable& table, const SequenceLayout& layout,
                                  const AttentionConfig& config);
HeadTensor attention_brute_oracle(const HeadTensor& q, const HeadTensor& k, const HeadTensor& v,
                                  const SequenceLayout& layout, const AttentionConfig& config);

}  // namespace tcattn
