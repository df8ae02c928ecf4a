#include "tcattn/masks.hpp"

namespace tcattn {

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::Causal: return "causal";
    case MaskKind::FullVisual: return "full_visual";
    case MaskKind::FwBlock: return "fw_block";
    case MaskKind::FwBlockCausal: return "fw_block_causal";
  }
  return "unknown";
}

const std::vector<MaskKind>& all_mask_kinds() {
  static const std::vector<MaskKind> kinds = {MaskKind::Causal, MaskKind::FullVisual,
                                              MaskKind::FwBlock, MaskKind::FwBlockCausal};
  return kinds;
}

std::string mask_kind_names() {
  std::string names;
  for (MaskKind k : all_mask_kinds()) {
    if (!names.empty()) names += ", ";
    names += to_string(k);
  }
  return names;
}

MaskKind parse_mask_kind(std::string_view name) {
  for (MaskKind k : all_mask_kinds()) {
    if (to_string(k) == name) return k;
  }
  throw InvalidInput("unknown mask kind '" + std::string(name) + "' (valid: " +
                     mask_kind_names() + ")");
}

bool allowed(MaskKind kind, const SequenceLayout& layout, std::int64_t i, std::int64_t j,
             MaskOptions options) {
  const auto fi = layout.frame_of(i);  // range-checks i
  const auto fj = layout.frame_of(j);
  const bool causal = i >= j;
  const bool both_visual = fi.has_value() && fj.has_value();
  const bool same_frame = both_visual && *fi == *fj;
  switch (kind) {
    case MaskKind::Causal: return causal;
    case MaskKind::FullVisual: return causal || both_visual;
    case MaskKind::FwBlock:
      if (both_visual) {
        return options.fw_block_causal_within_frame ? same_frame && causal : same_frame;
      }
      return causal;
    case MaskKind::FwBlockCausal: return causal || same_frame;
  }
  return false;
}

AttentionMask build_mask(MaskKind kind, const SequenceLayout& layout, MaskOptions options) {
  const auto n = static_cast<std::size_t>(layout.length());
  AttentionMask mask{kind, Matrix(n, n, neg_inf())};
  const std::int64_t vs = layout.visual_start();
  const std::int64_t m = layout.tokens_per_frame();
  const std::int64_t vlen = layout.visual_len();
  // Frame index per token, -1 for text; avoids re-deriving roles per cell.
  std::vector<std::int64_t> frame(n, -1);
  for (std::int64_t p = 0; p < vlen; ++p) frame[static_cast<std::size_t>(vs + p)] = p / m;

  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n > 256)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      const bool causal = i >= j;
      const bool both_visual = frame[i] >= 0 && frame[j] >= 0;
      const bool same_frame = both_visual && frame[i] == frame[j];
      bool ok = false;
      switch (kind) {
        case MaskKind::Causal: ok = causal; break;
        case MaskKind::FullVisual: ok = causal || both_visual; break;
        case MaskKind::FwBlock:
          ok = both_visual ? (options.fw_block_causal_within_frame ? same_frame && causal
                                                                    : same_frame)
                           : causal;
          break;
        case MaskKind::FwBlockCausal: ok = causal || same_frame; break;
      }
      if (ok) mask.values(i, j) = 0;
    }
  }
  return mask;
}

MaskStats mask_stats(const AttentionMask& mask) {
  MaskStats stats;
  const std::size_t n = mask.size();
  stats.per_row_allowed.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (mask.is_allowed(i, j)) ++stats.per_row_allowed[i];
    }
    stats.allowed_count += stats.per_row_allowed[i];
  }
  stats.allowed_fraction =
      n == 0 ? 0.0 : static_cast<double>(stats.allowed_count) / static_cast<double>(n * n);
  return stats;
}

}  // namespace tcattn
