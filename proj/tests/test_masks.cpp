#include <gtest/gtest.h>

#include "tcattn/masks.hpp"
#include "tcattn/verify.hpp"

using namespace tcattn;

namespace {

std::vector<std::vector<int>> allowed_grid(const AttentionMask& m) {
  std::vector<std::vector<int>> g(m.size(), std::vector<int>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) g[i][j] = m.is_allowed(i, j) ? 1 : 0;
  return g;
}

}  // namespace

TEST(MaskKind, NamesRoundTrip) {
  EXPECT_EQ(to_string(MaskKind::Causal), "causal");
  EXPECT_EQ(to_string(MaskKind::FullVisual), "full_visual");
  EXPECT_EQ(to_string(MaskKind::FwBlock), "fw_block");
  EXPECT_EQ(to_string(MaskKind::FwBlockCausal), "fw_block_causal");
  for (MaskKind k : all_mask_kinds()) EXPECT_EQ(parse_mask_kind(to_string(k)), k);
}

TEST(MaskKind, UnknownNameListsValidKinds) {
  try {
    parse_mask_kind("fancy");
    FAIL() << "expected InvalidInput";
  } catch (const InvalidInput& e) {
    const std::string msg = e.what();
    for (MaskKind k : all_mask_kinds()) EXPECT_NE(msg.find(to_string(k)), std::string::npos);
  }
}

TEST(Allowed, CausalUpperTriangleForbidden) {
  EXPECT_FALSE(allowed(MaskKind::Causal, build_layout(3, 0, 0, 0), 0, 2));
  EXPECT_TRUE(allowed(MaskKind::Causal, build_layout(3, 0, 0, 0), 2, 0));
}

TEST(Allowed, FwBlockCausalWorkedPairs) {
  const auto layout = build_layout(1, 2, 2, 1);
  EXPECT_TRUE(allowed(MaskKind::FwBlockCausal, layout, 1, 2));
  EXPECT_FALSE(allowed(MaskKind::FwBlockCausal, layout, 2, 4));
  EXPECT_TRUE(allowed(MaskKind::FwBlockCausal, layout, 4, 2));
  EXPECT_FALSE(allowed(MaskKind::FwBlockCausal, layout, 0, 1));
}

TEST(Allowed, FwBlockKeepsTextCausalAndSeparatesFrames) {
  const auto layout = build_layout(1, 2, 2, 1);
  EXPECT_TRUE(allowed(MaskKind::FwBlock, layout, 5, 0));
  EXPECT_TRUE(allowed(MaskKind::FwBlock, layout, 5, 3));
  EXPECT_TRUE(allowed(MaskKind::FwBlock, layout, 1, 0));
  EXPECT_FALSE(allowed(MaskKind::FwBlock, layout, 3, 2));
  EXPECT_TRUE(allowed(MaskKind::FwBlock, layout, 1, 2));
  EXPECT_FALSE(allowed(MaskKind::FwBlock, layout, 1, 2, {.fw_block_causal_within_frame = true}));
  EXPECT_TRUE(allowed(MaskKind::FwBlock, layout, 2, 1, {.fw_block_causal_within_frame = true}));
}

TEST(Allowed, FullVisualOpensAllVisualPairs) {
  const auto layout = build_layout(1, 2, 2, 1);
  EXPECT_TRUE(allowed(MaskKind::FullVisual, layout, 1, 4));
  EXPECT_FALSE(allowed(MaskKind::FullVisual, layout, 1, 5));
  EXPECT_FALSE(allowed(MaskKind::FullVisual, layout, 0, 1));
}

TEST(Allowed, RejectsOutOfRangeIndices) {
  const auto layout = build_layout(1, 2, 2, 1);
  EXPECT_THROW(allowed(MaskKind::Causal, layout, 6, 0), InvalidInput);
  EXPECT_THROW(allowed(MaskKind::Causal, layout, 0, -1), InvalidInput);
}

TEST(BuildMask, PureTextCausal) {
  const auto m = build_mask(MaskKind::Causal, build_layout(3, 0, 0, 0));
  EXPECT_EQ(allowed_grid(m), (std::vector<std::vector<int>>{{1, 0, 0}, {1, 1, 0}, {1, 1, 1}}));
  EXPECT_EQ(m.values(0, 1), neg_inf());
  EXPECT_EQ(mask_stats(m).allowed_count, 6u);
}

TEST(BuildMask, FwBlockTwoFramesIsBlockDiagonal) {
  const auto m = build_mask(MaskKind::FwBlock, build_layout(0, 2, 2, 0));
  EXPECT_EQ(allowed_grid(m),
            (std::vector<std::vector<int>>{{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 1, 1}, {0, 0, 1, 1}}));
}

TEST(BuildMask, SingleFrameFullVisualEqualsFwBlockCausal) {
  const auto layout = build_layout(1, 1, 2, 1);
  EXPECT_EQ(build_mask(MaskKind::FullVisual, layout).values,
            build_mask(MaskKind::FwBlockCausal, layout).values);
}

TEST(MaskStats, SingleFrameIsFullBlock) {
  const auto s = mask_stats(build_mask(MaskKind::FwBlockCausal, build_layout(0, 1, 4, 0)));
  EXPECT_EQ(s.allowed_count, 16u);
  EXPECT_EQ(s.allowed_fraction, 1.0);
  EXPECT_EQ(s.per_row_allowed, (std::vector<std::size_t>{4, 4, 4, 4}));
}

TEST(MaskStats, NoVisualSpanAllKindsMatchCausal) {
  const auto layout = build_layout(4, 0, 0, 3);
  const auto causal = build_mask(MaskKind::Causal, layout);
  for (MaskKind k : all_mask_kinds()) {
    const auto m = build_mask(k, layout);
    EXPECT_EQ(m.values, causal.values) << to_string(k);
    EXPECT_EQ(mask_stats(m).allowed_count, 28u);
  }
}

TEST(BuildMask, MatchesPredicateAndSupersetChain) {
  Rng rng(21);
  for (int c = 0; c < 100; ++c) {
    const auto layout = random_layout(rng, 32);
    const auto n = layout.length();
    for (bool within : {false, true}) {
      const MaskOptions opts{.fw_block_causal_within_frame = within};
      for (MaskKind k : all_mask_kinds()) {
        const auto m = build_mask(k, layout, opts);
        ASSERT_EQ(m.kind, k);
        for (std::int64_t i = 0; i < n; ++i) {
          EXPECT_TRUE(m.is_allowed(i, i));
          for (std::int64_t j = 0; j < n; ++j) {
            const Real v = m.values(i, j);
            EXPECT_TRUE(v == 0 || v == neg_inf());
            EXPECT_EQ(m.is_allowed(i, j), allowed(k, layout, i, j, opts));
          }
        }
      }
    }
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < n; ++j) {
        const bool causal = allowed(MaskKind::Causal, layout, i, j);
        const bool fwbc = allowed(MaskKind::FwBlockCausal, layout, i, j);
        const bool full = allowed(MaskKind::FullVisual, layout, i, j);
        EXPECT_TRUE(!causal || fwbc);
        EXPECT_TRUE(!fwbc || full);
        if (fwbc && !causal) {
          // Only intra-frame upper-triangle visual pairs are added.
          EXPECT_LT(i, j);
          EXPECT_EQ(layout.frame_of(i), layout.frame_of(j));
          EXPECT_TRUE(layout.frame_of(i).has_value());
        }
        if (layout.frame_of(i) && layout.frame_of(i) == layout.frame_of(j)) {
          EXPECT_EQ(fwbc, allowed(MaskKind::FwBlockCausal, layout, j, i));
        }
      }
    }
  }
}

TEST(BuildMask, LargeLayoutParallelPathMatchesPredicate) {
  const auto layout = build_layout(30, 12, 25, 20);
  const auto m = build_mask(MaskKind::FwBlock, layout);
  for (std::int64_t i = 0; i < layout.length(); i += 7)
    for (std::int64_t j = 0; j < layout.length(); ++j)
      ASSERT_EQ(m.is_allowed(i, j), allowed(MaskKind::FwBlock, layout, i, j));
}
