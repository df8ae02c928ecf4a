#pragma once

// Synthetic temporal tasks over a SequenceLayout. Text and visual tokens
// share one vocabulary; a token's role comes only from its position.
//
// Vocabulary:
//   0..3    text filler
//   4       query (last suffix token)
//   5       marker
//   6..13   candidate / scene symbols
//   14..19  visual filler

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tcattn/layout.hpp"

namespace tcattn {

enum class TaskKind {
  /// Every frame shows one scene symbol; scenes are a shuffled permutation
  /// of the first F candidates. Label: scene of the temporally first frame.
  FrameOrder,
  /// Each frame holds the marker with probability 1/2. Label: marked frame count.
  MovingCount,
  /// One candidate per frame; the final frame's candidate appears nowhere
  /// else. Label: that candidate.
  LastFrameRecall,
};

std::string to_string(TaskKind task);
TaskKind parse_task(std::string_view name);
const std::vector<TaskKind>& all_tasks();

namespace vocab {
inline constexpr int kTextBase = 0;
inline constexpr int kTextCount = 4;
inline constexpr int kQuery = 4;
inline constexpr int kMarker = 5;
inline constexpr int kCandidateBase = 6;
inline constexpr int kCandidateCount = 8;
inline constexpr int kVisualBase = 14;
inline constexpr int kVisualCount = 6;
inline constexpr int kSize = 20;
}  // namespace vocab

/// Candidates used by LastFrameRecall.
inline constexpr int kRecallCandidates = 4;

struct Example {
  std::vector<int> tokens;
  int label = 0;

  bool operator==(const Example&) const = default;
};

struct Dataset {
  TaskKind task = TaskKind::FrameOrder;
  std::size_t num_classes = 1;
  std::vector<Example> examples;
};

std::size_t num_classes(TaskKind task, const SequenceLayout& layout);

/// Deterministic in (task, layout, seed, count). Throws InvalidInput when the
/// layout has no visual span, or FrameOrder has more frames than candidates.
Dataset gen_task(TaskKind task, const SequenceLayout& layout, std::uint64_t seed,
                 std::size_t count);

/// One line per example: "<label>:<tok> <tok> ...".
std::string serialize_dataset(const Dataset& data);

}  // namespace tcattn
