#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "golden.hpp"
#include "tcattn/tasks.hpp"

using namespace tcattn;

namespace {

const SequenceLayout kLayout = build_layout(2, 4, 4, 2);

std::vector<int> frame_tokens(const Example& ex, const SequenceLayout& l, std::int64_t f) {
  const auto begin = ex.tokens.begin() + l.visual_start() + f * l.tokens_per_frame();
  return {begin, begin + l.tokens_per_frame()};
}

}  // namespace

TEST(TaskKind, NamesRoundTrip) {
  for (TaskKind t : all_tasks()) EXPECT_EQ(parse_task(to_string(t)), t);
  EXPECT_THROW(parse_task("counting"), InvalidInput);
}

TEST(GenTask, DeterministicPerSeed) {
  for (TaskKind t : all_tasks()) {
    const auto a = gen_task(t, kLayout, 42, 50);
    const auto b = gen_task(t, kLayout, 42, 50);
    const auto c = gen_task(t, kLayout, 43, 50);
    EXPECT_EQ(serialize_dataset(a), serialize_dataset(b));
    EXPECT_NE(serialize_dataset(a), serialize_dataset(c));
    EXPECT_EQ(a.examples.size(), 50u);
  }
}

TEST(GenTask, GoldenDatasetSeed42) {
  for (TaskKind t : all_tasks()) {
    expect_golden("dataset_" + to_string(t) + "_seed42.txt", serialize_dataset(gen_task(t, kLayout, 42, 16)));
  }
}

TEST(GenTask, RejectsEmptyVisualSpan) {
  for (TaskKind t : all_tasks()) EXPECT_THROW(gen_task(t, build_layout(4, 0, 0, 2), 1, 1), InvalidInput);
  EXPECT_THROW(gen_task(TaskKind::FrameOrder, build_layout(1, 9, 2, 1), 1, 1), InvalidInput);
}

TEST(GenTask, TextTokensAndQuery) {
  for (TaskKind t : all_tasks()) {
    for (const auto& ex : gen_task(t, kLayout, 3, 40).examples) {
      ASSERT_EQ(ex.tokens.size(), 20u);
      for (int n : {0, 1, 18}) {
        EXPECT_GE(ex.tokens[n], vocab::kTextBase);
        EXPECT_LT(ex.tokens[n], vocab::kTextBase + vocab::kTextCount);
      }
      EXPECT_EQ(ex.tokens.back(), vocab::kQuery);
      for (int tok : ex.tokens) {
        EXPECT_GE(tok, 0);
        EXPECT_LT(tok, vocab::kSize);
      }
    }
  }
}

TEST(FrameOrder, LabelIsSceneOfFirstFrame) {
  const auto data = gen_task(TaskKind::FrameOrder, kLayout, 5, 200);
  EXPECT_EQ(data.num_classes, 4u);
  std::set<int> labels;
  for (const auto& ex : data.examples) {
    std::set<int> scenes;
    for (std::int64_t f = 0; f < 4; ++f) {
      std::set<int> in_frame;
      for (int tok : frame_tokens(ex, kLayout, f)) {
        if (tok >= vocab::kCandidateBase && tok < vocab::kCandidateBase + vocab::kCandidateCount) {
          in_frame.insert(tok - vocab::kCandidateBase);
        }
      }
      ASSERT_EQ(in_frame.size(), 1u) << "each frame shows exactly one scene";
      if (f == 0) EXPECT_EQ(*in_frame.begin(), ex.label);
      scenes.insert(*in_frame.begin());
    }
    EXPECT_EQ(scenes, (std::set<int>{0, 1, 2, 3}));
    labels.insert(ex.label);
  }
  EXPECT_EQ(labels.size(), 4u);
}

TEST(FrameOrder, SingleFrameLabelIsZero) {
  for (const auto& ex : gen_task(TaskKind::FrameOrder, build_layout(1, 1, 3, 1), 9, 30).examples) {
    EXPECT_EQ(ex.label, 0);
  }
}

TEST(MovingCount, LabelCountsMarkedFrames) {
  const auto data = gen_task(TaskKind::MovingCount, kLayout, 6, 200);
  EXPECT_EQ(data.num_classes, 5u);
  bool saw_zero = false;
  for (const auto& ex : data.examples) {
    int count = 0;
    for (std::int64_t f = 0; f < 4; ++f) {
      const auto toks = frame_tokens(ex, kLayout, f);
      count += std::count(toks.begin(), toks.end(), vocab::kMarker) > 0 ? 1 : 0;
    }
    EXPECT_EQ(count, ex.label);
    saw_zero = saw_zero || ex.label == 0;
  }
  EXPECT_TRUE(saw_zero);
}

TEST(LastFrameRecall, TargetOnlyInFinalFrame) {
  const auto data = gen_task(TaskKind::LastFrameRecall, kLayout, 7, 200);
  EXPECT_EQ(data.num_classes, static_cast<std::size_t>(kRecallCandidates));
  for (const auto& ex : data.examples) {
    const int target = vocab::kCandidateBase + ex.label;
    for (std::int64_t f = 0; f < 4; ++f) {
      const auto toks = frame_tokens(ex, kLayout, f);
      const auto hits = std::count(toks.begin(), toks.end(), target);
      EXPECT_EQ(hits, f == 3 ? 1 : 0);
    }
    EXPECT_EQ(std::count(ex.tokens.begin(), ex.tokens.end(), target), 1);
  }
}

TEST(SerializeDataset, Format) {
  Dataset d;
  d.examples = {{{1, 2, 3}, 0}, {{4}, 2}};
  EXPECT_EQ(serialize_dataset(d), "0:1 2 3\n2:4\n");
}
