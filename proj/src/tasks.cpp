#include "tcattn/tasks.hpp"

#include <algorithm>

namespace tcattn {

std::string to_string(TaskKind task) {
  switch (task) {
    case TaskKind::FrameOrder: return "frame_order";
    case TaskKind::MovingCount: return "moving_count";
    case TaskKind::LastFrameRecall: return "last_frame_recall";
  }
  return "unknown";
}

const std::vector<TaskKind>& all_tasks() {
  static const std::vector<TaskKind> tasks = {TaskKind::FrameOrder, TaskKind::MovingCount,
                                              TaskKind::LastFrameRecall};
  return tasks;
}

TaskKind parse_task(std::string_view name) {
  for (TaskKind t : all_tasks()) {
    if (to_string(t) == name) return t;
  }
  throw InvalidInput("unknown task '" + std::string(name) +
                     "' (valid: frame_order, moving_count, last_frame_recall)");
}

std::size_t num_classes(TaskKind task, const SequenceLayout& layout) {
  switch (task) {
    case TaskKind::FrameOrder: return static_cast<std::size_t>(layout.num_frames());
    case TaskKind::MovingCount: return static_cast<std::size_t>(layout.num_frames()) + 1;
    case TaskKind::LastFrameRecall: return kRecallCandidates;
  }
  return 1;
}

namespace {

int pick(Rng& rng, int base, int count) {
  return base + static_cast<int>(rng.below(static_cast<std::uint64_t>(count)));
}

Example make_example(TaskKind task, const SequenceLayout& layout, Rng& rng) {
  const auto total = static_cast<std::size_t>(layout.length());
  const auto frames = static_cast<std::size_t>(layout.num_frames());
  const auto per_frame = static_cast<std::size_t>(layout.tokens_per_frame());
  const auto vs = static_cast<std::size_t>(layout.visual_start());

  Example ex;
  ex.tokens.resize(total);
  for (std::size_t n = 0; n < total; ++n) {
    ex.tokens[n] = layout.is_visual(static_cast<std::int64_t>(n))
                       ? pick(rng, vocab::kVisualBase, vocab::kVisualCount)
                       : pick(rng, vocab::kTextBase, vocab::kTextCount);
  }
  if (layout.suffix_len() > 0) ex.tokens.back() = vocab::kQuery;

  auto slot = [&](std::size_t frame, std::size_t k) -> int& {
    return ex.tokens[vs + frame * per_frame + k];
  };

  switch (task) {
    case TaskKind::FrameOrder: {
      std::vector<int> scenes(frames);
      for (std::size_t f = 0; f < frames; ++f) scenes[f] = static_cast<int>(f);
      rng.shuffle(scenes);
      for (std::size_t f = 0; f < frames; ++f) {
        const int symbol = vocab::kCandidateBase + scenes[f];
        const std::size_t anchor = rng.below(per_frame);
        for (std::size_t k = 0; k < per_frame; ++k) {
          if (k == anchor || rng.uniform() < 0.5) slot(f, k) = symbol;
        }
      }
      ex.label = scenes[0];
      break;
    }
    case TaskKind::MovingCount: {
      int count = 0;
      for (std::size_t f = 0; f < frames; ++f) {
        if (rng.uniform() < 0.5) {
          slot(f, rng.below(per_frame)) = vocab::kMarker;
          ++count;
        }
      }
      ex.label = count;
      break;
    }
    case TaskKind::LastFrameRecall: {
      const int target = static_cast<int>(rng.below(kRecallCandidates));
      for (std::size_t f = 0; f + 1 < frames; ++f) {
        // any candidate except the target
        int c = static_cast<int>(rng.below(kRecallCandidates - 1));
        if (c >= target) ++c;
        slot(f, rng.below(per_frame)) = vocab::kCandidateBase + c;
      }
      slot(frames - 1, rng.below(per_frame)) = vocab::kCandidateBase + target;
      ex.label = target;
      break;
    }
  }
  return ex;
}

}  // namespace

Dataset gen_task(TaskKind task, const SequenceLayout& layout, std::uint64_t seed,
                 std::size_t count) {
  if (!layout.has_visual()) {
    throw InvalidInput("gen_task: task '" + to_string(task) + "' needs a non-empty visual span");
  }
  if (task == TaskKind::FrameOrder && layout.num_frames() > vocab::kCandidateCount) {
    throw InvalidInput("gen_task: frame_order supports at most " +
                       std::to_string(vocab::kCandidateCount) + " frames");
  }
  Dataset data;
  data.task = task;
  data.num_classes = num_classes(task, layout);
  data.examples.reserve(count);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) data.examples.push_back(make_example(task, layout, rng));
  return data;
}

std::string serialize_dataset(const Dataset& data) {
  std::string out;
  for (const auto& ex : data.examples) {
    out += std::to_string(ex.label);
    out += ':';
    for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
      if (i > 0) out += ' ';
      out += std::to_string(ex.tokens[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace tcattn
