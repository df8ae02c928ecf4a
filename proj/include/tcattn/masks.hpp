#pragma once

// Additive T×T attention masks over a SequenceLayout. Entry (i, j) is 0
// when query i may attend to key j and -inf otherwise.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tcattn/layout.hpp"
#include "tcattn/numerics.hpp"

namespace tcattn {

enum class MaskKind { Causal, FullVisual, FwBlock, FwBlockCausal };

/// "causal", "full_visual", "fw_block", "fw_block_causal"
std::string to_string(MaskKind kind);
MaskKind parse_mask_kind(std::string_view name);
const std::vector<MaskKind>& all_mask_kinds();
/// Comma-separated list of the accepted names, for error messages.
std::string mask_kind_names();

struct MaskOptions {
  /// Alternative reading of the frame-wise block mask in which a visual
  /// token only sees earlier tokens of its own frame.
  bool fw_block_causal_within_frame = false;
};

/// Causal:        i >= j
/// FullVisual:    i >= j, or both visual
/// FwBlock:       both visual -> same frame; otherwise i >= j
/// FwBlockCausal: i >= j, or both visual in the same frame
bool allowed(MaskKind kind, const SequenceLayout& layout, std::int64_t i, std::int64_t j,
             MaskOptions options = {});

struct AttentionMask {
  MaskKind kind = MaskKind::Causal;
  Matrix values;

  std::size_t size() const { return values.rows(); }
  bool is_allowed(std::size_t i, std::size_t j) const { return values(i, j) == Real{0}; }
};

AttentionMask build_mask(MaskKind kind, const SequenceLayout& layout, MaskOptions options = {});

struct MaskStats {
  std::size_t allowed_count = 0;
  double allowed_fraction = 0;
  std::vector<std::size_t> per_row_allowed;
};

MaskStats mask_stats(const AttentionMask& mask);

}  // namespace tcattn
