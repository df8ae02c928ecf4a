#include "tcattn/layout.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace tcattn {

std::string to_string(TokenRole role) {
  switch (role) {
    case TokenRole::TextPrefix: return "text_prefix";
    case TokenRole::Visual: return "visual";
    case TokenRole::TextSuffix: return "text_suffix";
  }
  return "unknown";
}

SequenceLayout build_layout(std::int64_t prefix_len, std::int64_t num_frames,
                            std::int64_t tokens_per_frame, std::int64_t suffix_len) {
  if (prefix_len < 0 || num_frames < 0 || tokens_per_frame < 0 || suffix_len < 0) {
    throw InvalidInput("layout: counts must be non-negative");
  }
  if ((num_frames > 0) != (tokens_per_frame > 0)) {
    throw InvalidInput("layout: num_frames and tokens_per_frame must both be zero or both positive");
  }
  if (prefix_len + num_frames * tokens_per_frame + suffix_len < 1) {
    throw InvalidInput("layout: sequence length must be at least 1");
  }
  return SequenceLayout(prefix_len, num_frames, tokens_per_frame, suffix_len);
}

void SequenceLayout::check_index(std::int64_t n) const {
  if (n < 0 || n >= length()) {
    throw InvalidInput("layout: position " + std::to_string(n) + " outside [0, " +
                       std::to_string(length()) + ")");
  }
}

TokenRole SequenceLayout::role(std::int64_t n) const {
  check_index(n);
  if (n < prefix_len_) return TokenRole::TextPrefix;
  if (n < prefix_len_ + visual_len()) return TokenRole::Visual;
  return TokenRole::TextSuffix;
}

bool SequenceLayout::is_visual(std::int64_t n) const { return role(n) == TokenRole::Visual; }

std::optional<std::int64_t> SequenceLayout::frame_of(std::int64_t n) const {
  if (!is_visual(n)) return std::nullopt;
  return (n - prefix_len_) / tokens_per_frame_;
}

std::vector<std::int64_t> temporal_ids(const SequenceLayout& layout, TemporalIdOptions options) {
  const std::int64_t total = layout.length();
  std::vector<std::int64_t> ids(static_cast<std::size_t>(total));
  if (!layout.has_visual()) {
    for (std::int64_t n = 0; n < total; ++n) ids[static_cast<std::size_t>(n)] = n;
    return ids;
  }
  const std::int64_t vs = layout.visual_start();
  const std::int64_t ve = layout.visual_end();
  const std::int64_t m = layout.tokens_per_frame();
  // Everything here is non-negative, so integer division is the floor.
  const std::int64_t suffix_shift = ve - vs + 1 - (ve - vs) / m;
  const std::int64_t suffix_bump = options.strict_monotonic_suffix ? 1 : 0;
  for (std::int64_t n = 0; n < total; ++n) {
    std::int64_t id;
    if (n < vs) {
      id = n;
    } else if (n <= ve) {
      id = vs + (n - vs) / m;
    } else {
      id = n - suffix_shift + suffix_bump;
    }
    ids[static_cast<std::size_t>(n)] = id;
  }
  return ids;
}

PositionTable make_position_table(std::vector<std::int64_t> global_ids,
                                  std::vector<std::int64_t> temporal, Real gamma) {
  if (!std::isfinite(gamma)) throw InvalidInput("positions: gamma must be finite");
  if (global_ids.size() != temporal.size()) {
    throw InvalidInput("positions: global and temporal id counts differ");
  }
  PositionTable table;
  table.gamma = gamma;
  table.adjusted.resize(global_ids.size());
  for (std::size_t n = 0; n < global_ids.size(); ++n) {
    table.adjusted[n] = static_cast<Real>(global_ids[n]) + gamma * static_cast<Real>(temporal[n]);
  }
  table.global_ids = std::move(global_ids);
  table.temporal_ids = std::move(temporal);
  return table;
}

PositionTable adjusted_positions(const SequenceLayout& layout, Real gamma,
                                 TemporalIdOptions options) {
  std::vector<std::int64_t> global(static_cast<std::size_t>(layout.length()));
  for (std::size_t n = 0; n < global.size(); ++n) global[n] = static_cast<std::int64_t>(n);
  return make_position_table(std::move(global), temporal_ids(layout, options), gamma);
}

Real relative_text_visual_distance(const PositionTable& table, std::int64_t text_pos,
                                   std::int64_t visual_pos) {
  const auto size = static_cast<std::int64_t>(table.size());
  if (text_pos < 0 || text_pos >= size || visual_pos < 0 || visual_pos >= size) {
    throw InvalidInput("relative_text_visual_distance: index out of range");
  }
  return table.adjusted[static_cast<std::size_t>(text_pos)] -
         table.adjusted[static_cast<std::size_t>(visual_pos)];
}

Real relative_text_visual_distance(const PositionTable& table, const SequenceLayout& layout,
                                   std::int64_t text_pos, std::int64_t visual_pos) {
  if (static_cast<std::int64_t>(table.size()) != layout.length()) {
    throw InvalidInput("relative_text_visual_distance: table does not match layout");
  }
  if (layout.is_visual(text_pos)) {
    throw InvalidInput("relative_text_visual_distance: text_pos is a visual token");
  }
  if (!layout.is_visual(visual_pos)) {
    throw InvalidInput("relative_text_visual_distance: visual_pos is a text token");
  }
  return relative_text_visual_distance(table, text_pos, visual_pos);
}

nlohmann::json layout_to_json(const SequenceLayout& layout) {
  return {{"prefix_len", layout.prefix_len()},
          {"num_frames", layout.num_frames()},
          {"tokens_per_frame", layout.tokens_per_frame()},
          {"suffix_len", layout.suffix_len()}};
}

SequenceLayout layout_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("layout JSON must be an object");
  auto field = [&](const char* key) -> std::int64_t {
    if (!j.contains(key)) return 0;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) {
      throw InvalidInput(std::string("layout JSON: '") + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
  };
  for (const auto& [key, value] : j.items()) {
    if (key != "prefix_len" && key != "num_frames" && key != "tokens_per_frame" &&
        key != "suffix_len") {
      throw InvalidInput("layout JSON: unknown key '" + key + "'");
    }
  }
  return build_layout(field("prefix_len"), field("num_frames"), field("tokens_per_frame"),
                      field("suffix_len"));
}

}  // namespace tcattn
