#pragma once

// Token-role structure of a multimodal sequence (text prefix, F frames of m
// visual tokens, text suffix) and the global / temporal / adjusted
// position ids derived from it.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tcattn/numerics.hpp"

namespace tcattn {

enum class TokenRole { TextPrefix, Visual, TextSuffix };

std::string to_string(TokenRole role);

/// A single contiguous video span embedded in text. Immutable once built;
/// construct through build_layout.
class SequenceLayout {
 public:
  std::int64_t prefix_len() const { return prefix_len_; }
  std::int64_t num_frames() const { return num_frames_; }
  std::int64_t tokens_per_frame() const { return tokens_per_frame_; }
  std::int64_t suffix_len() const { return suffix_len_; }

  std::int64_t visual_len() const { return num_frames_ * tokens_per_frame_; }
  std::int64_t length() const { return prefix_len_ + visual_len() + suffix_len_; }
  bool has_visual() const { return visual_len() > 0; }

  /// First visual position (v_s). Equals prefix_len even when the span is empty.
  std::int64_t visual_start() const { return prefix_len_; }
  /// Last visual position (v_e); only meaningful when has_visual().
  std::int64_t visual_end() const { return prefix_len_ + visual_len() - 1; }

  TokenRole role(std::int64_t n) const;
  bool is_visual(std::int64_t n) const;
  /// Frame index of a visual token, nullopt for text.
  std::optional<std::int64_t> frame_of(std::int64_t n) const;

  bool operator==(const SequenceLayout&) const = default;

 private:
  friend SequenceLayout build_layout(std::int64_t, std::int64_t, std::int64_t, std::int64_t);
  SequenceLayout(std::int64_t p, std::int64_t f, std::int64_t m, std::int64_t s)
      : prefix_len_(p), num_frames_(f), tokens_per_frame_(m), suffix_len_(s) {}

  void check_index(std::int64_t n) const;

  std::int64_t prefix_len_;
  std::int64_t num_frames_;
  std::int64_t tokens_per_frame_;
  std::int64_t suffix_len_;
};

/// Throws InvalidInput for negative counts, an empty sequence, or frames
/// without tokens (and the converse).
SequenceLayout build_layout(std::int64_t prefix_len, std::int64_t num_frames,
                            std::int64_t tokens_per_frame, std::int64_t suffix_len);

struct TemporalIdOptions {
  /// Adds 1 to every post-visual id so the first suffix token no longer
  /// shares the last frame's id. Off by default.
  bool strict_monotonic_suffix = false;
};

/// Temporal position id I_t(n) per token:
///   n                                   for n <  v_s
///   v_s + floor((n - v_s) / m)          for v_s <= n <= v_e
///   n - (v_e - v_s + 1 - floor((v_e - v_s) / m))   for n > v_e
/// Identity when there is no visual span.
std::vector<std::int64_t> temporal_ids(const SequenceLayout& layout,
                                       TemporalIdOptions options = {});

struct PositionTable {
  std::vector<std::int64_t> global_ids;
  std::vector<std::int64_t> temporal_ids;
  /// adjusted[n] = global_ids[n] + gamma * temporal_ids[n]
  std::vector<Real> adjusted;
  Real gamma = 0;

  std::size_t size() const { return global_ids.size(); }
};

PositionTable adjusted_positions(const SequenceLayout& layout, Real gamma,
                                 TemporalIdOptions options = {});

/// Rebuilds a table from explicit ids (used to shift ids jointly).
PositionTable make_position_table(std::vector<std::int64_t> global_ids,
                                  std::vector<std::int64_t> temporal_ids, Real gamma);

/// adjusted[text_pos] - adjusted[visual_pos].
Real relative_text_visual_distance(const PositionTable& table, std::int64_t text_pos,
                                   std::int64_t visual_pos);

/// As above, additionally checking that the two positions carry the named roles.
Real relative_text_visual_distance(const PositionTable& table, const SequenceLayout& layout,
                                   std::int64_t text_pos, std::int64_t visual_pos);

nlohmann::json layout_to_json(const SequenceLayout& layout);
/// Accepts {prefix_len, num_frames, tokens_per_frame, suffix_len}; missing
/// keys default to 0. Throws InvalidInput on bad types or an invalid layout.
SequenceLayout layout_from_json(const nlohmann::json& j);

}  // namespace tcattn
