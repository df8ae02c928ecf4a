#include <nlohmann/json.hpp>

#include <gtest/gtest.h>

#include "tcattn/layout.hpp"
#include "tcattn/verify.hpp"

using namespace tcattn;

TEST(BuildLayout, PrefixFramesSuffix) {
  const auto l = build_layout(2, 2, 4, 3);
  EXPECT_EQ(l.length(), 13);
  EXPECT_EQ(l.visual_start(), 2);
  EXPECT_EQ(l.visual_end(), 9);
  EXPECT_EQ(l.role(1), TokenRole::TextPrefix);
  EXPECT_EQ(l.role(2), TokenRole::Visual);
  EXPECT_EQ(l.role(9), TokenRole::Visual);
  EXPECT_EQ(l.role(10), TokenRole::TextSuffix);
  EXPECT_EQ(l.frame_of(5), 0);
  EXPECT_EQ(l.frame_of(6), 1);
  EXPECT_EQ(l.frame_of(10), std::nullopt);
}

TEST(BuildLayout, SingleVisualToken) {
  const auto l = build_layout(0, 1, 1, 0);
  EXPECT_EQ(l.length(), 1);
  EXPECT_TRUE(l.has_visual());
  EXPECT_EQ(l.visual_start(), 0);
  EXPECT_EQ(l.visual_end(), 0);
  EXPECT_EQ(l.role(0), TokenRole::Visual);
}

TEST(BuildLayout, NoVisualSpan) {
  const auto l = build_layout(3, 0, 0, 2);
  EXPECT_EQ(l.length(), 5);
  EXPECT_FALSE(l.has_visual());
  for (std::int64_t n = 0; n < 3; ++n) EXPECT_EQ(l.role(n), TokenRole::TextPrefix);
  for (std::int64_t n = 3; n < 5; ++n) EXPECT_EQ(l.role(n), TokenRole::TextSuffix);
}

TEST(BuildLayout, RejectsInvalidCounts) {
  EXPECT_THROW(build_layout(0, 0, 0, 0), InvalidInput);
  EXPECT_THROW(build_layout(1, 2, 0, 0), InvalidInput);
  EXPECT_THROW(build_layout(1, 0, 3, 0), InvalidInput);
  EXPECT_THROW(build_layout(-1, 1, 1, 0), InvalidInput);
  EXPECT_THROW(build_layout(1, 1, 1, 0).role(3), InvalidInput);
  EXPECT_THROW(build_layout(1, 1, 1, 0).role(-1), InvalidInput);
}

TEST(TemporalIds, WorkedLayout) {
  // v_s = 4, v_e = 11, m = 4.
  const auto ids = temporal_ids(build_layout(4, 2, 4, 3));
  EXPECT_EQ(ids[3], 3);
  EXPECT_EQ(ids[7], 4);
  EXPECT_EQ(ids[8], 5);
  EXPECT_EQ(ids[12], 5);
  EXPECT_EQ(ids[13], 6);
  EXPECT_EQ(ids, (std::vector<std::int64_t>{0, 1, 2, 3, 4, 4, 4, 4, 5, 5, 5, 5, 5, 6, 7}));
}

TEST(TemporalIds, StrictSuffixShiftsPostVisualIds) {
  const auto ids = temporal_ids(build_layout(4, 2, 4, 3), {.strict_monotonic_suffix = true});
  EXPECT_EQ(ids[11], 5);
  EXPECT_EQ(ids[12], 6);
  EXPECT_EQ(ids[14], 8);
  EXPECT_EQ(ids[3], 3);
}

TEST(TemporalIds, IdentityWithoutVisualSpan) {
  const auto ids = temporal_ids(build_layout(3, 0, 0, 4));
  for (std::size_t n = 0; n < ids.size(); ++n) EXPECT_EQ(ids[n], static_cast<std::int64_t>(n));
}

TEST(TemporalIds, FramesShareIdsAndStepByOne) {
  Rng rng(11);
  for (int c = 0; c < 200; ++c) {
    const auto layout = random_layout(rng, 64);
    const auto ids = temporal_ids(layout);
    for (std::size_t n = 1; n < ids.size(); ++n) EXPECT_GE(ids[n], ids[n - 1]);
    if (!layout.has_visual()) continue;
    for (std::int64_t n = layout.visual_start(); n <= layout.visual_end(); ++n) {
      const auto f = *layout.frame_of(n);
      EXPECT_EQ(ids[n], layout.visual_start() + f);
    }
  }
}

TEST(TemporalIds, MatchesBranchOracle) {
  Rng rng(12);
  for (int c = 0; c < 1000; ++c) {
    const auto layout = random_layout(rng, 256);
    ASSERT_EQ(temporal_ids(layout), oracles::temporal_ids_by_branches(layout));
  }
}

TEST(AdjustedPositions, GammaZeroIsGlobal) {
  const auto t = adjusted_positions(build_layout(4, 2, 4, 3), 0);
  for (std::size_t n = 0; n < t.size(); ++n) EXPECT_EQ(t.adjusted[n], static_cast<Real>(n));
}

TEST(AdjustedPositions, WorkedValues) {
  const auto layout = build_layout(4, 2, 4, 3);
  EXPECT_EQ(adjusted_positions(layout, 1).adjusted[8], 13);
  EXPECT_EQ(adjusted_positions(layout, 0.5).adjusted[3], 4.5);
}

TEST(AdjustedPositions, InvariantsHold) {
  Rng rng(13);
  for (int c = 0; c < 100; ++c) {
    const auto layout = random_layout(rng, 64);
    const Real gamma = rng.uniform(-2, 2);
    const auto t = adjusted_positions(layout, gamma);
    const auto t0 = adjusted_positions(layout, 0);
    const auto t1 = adjusted_positions(layout, 1);
    ASSERT_EQ(t.size(), static_cast<std::size_t>(layout.length()));
    for (std::size_t n = 0; n < t.size(); ++n) {
      EXPECT_EQ(t.global_ids[n], static_cast<std::int64_t>(n));
      EXPECT_EQ(t.adjusted[n], t.global_ids[n] + gamma * t.temporal_ids[n]);
      EXPECT_EQ(t1.adjusted[n] - t0.adjusted[n], static_cast<Real>(t.temporal_ids[n]));
    }
  }
}

TEST(AdjustedPositions, RejectsNonFiniteGamma) {
  const auto layout = build_layout(1, 1, 1, 1);
  EXPECT_THROW(adjusted_positions(layout, std::numeric_limits<Real>::quiet_NaN()), InvalidInput);
  EXPECT_THROW(adjusted_positions(layout, std::numeric_limits<Real>::infinity()), InvalidInput);
}

TEST(RelativeDistance, WorkedValues) {
  const auto layout = build_layout(4, 2, 4, 3);
  EXPECT_EQ(relative_text_visual_distance(adjusted_positions(layout, 0), layout, 12, 5), 7);
  EXPECT_EQ(relative_text_visual_distance(adjusted_positions(layout, 1), layout, 12, 8), 4);
  EXPECT_EQ(relative_text_visual_distance(adjusted_positions(layout, 1), 6, 6), 0);
}

TEST(RelativeDistance, RejectsBadIndicesAndRoles) {
  const auto layout = build_layout(4, 2, 4, 3);
  const auto t = adjusted_positions(layout, 1);
  EXPECT_THROW(relative_text_visual_distance(t, 15, 5), InvalidInput);
  EXPECT_THROW(relative_text_visual_distance(t, 0, -1), InvalidInput);
  EXPECT_THROW(relative_text_visual_distance(t, layout, 5, 6), InvalidInput);
  EXPECT_THROW(relative_text_visual_distance(t, layout, 12, 13), InvalidInput);
}

TEST(LayoutJson, RoundTripAndDefaults) {
  const auto layout = build_layout(4, 2, 4, 3);
  EXPECT_EQ(layout_from_json(layout_to_json(layout)), layout);
  EXPECT_EQ(layout_from_json(nlohmann::json{{"prefix_len", 3}}), build_layout(3, 0, 0, 0));
}

TEST(LayoutJson, RejectsBadInput) {
  EXPECT_THROW(layout_from_json(nlohmann::json{{"prefix_len", "x"}}), InvalidInput);
  EXPECT_THROW(layout_from_json(nlohmann::json{{"prefix", 3}}), InvalidInput);
  EXPECT_THROW(layout_from_json(nlohmann::json::array()), InvalidInput);
  EXPECT_THROW(layout_from_json(nlohmann::json::object()), InvalidInput);
}

TEST(TokenRole, Names) {
  EXPECT_EQ(to_string(TokenRole::TextPrefix), "text_prefix");
  EXPECT_EQ(to_string(TokenRole::Visual), "visual");
  EXPECT_EQ(to_string(TokenRole::TextSuffix), "text_suffix");
}
