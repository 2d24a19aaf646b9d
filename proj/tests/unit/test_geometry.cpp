#include <gtest/gtest.h>

#include <random>

#include "c3vg/errors.hpp"
#include "c3vg/geometry.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace c3vg;

namespace {

Box corners(double x1, double y1, double x2, double y2) { return Box::from_corners(x1, y1, x2, y2); }

}  // namespace

TEST(BoxToDiscrete, CentredHalfBox) {
  EXPECT_EQ(box_to_discrete({0.5, 0.5, 0.5, 0.5}, 8, 8), (DiscreteBox{2, 2, 6, 6}));
}

TEST(BoxToDiscrete, FullImage) { EXPECT_EQ(box_to_discrete({0.5, 0.5, 1, 1}, 4, 4), (DiscreteBox{0, 0, 4, 4})); }

TEST(BoxToDiscrete, FloorAndCeil) {
  EXPECT_EQ(box_to_discrete({0.4, 0.4, 0.3, 0.3}, 10, 10), (DiscreteBox{2, 2, 6, 6}));
}

TEST(BoxToDiscrete, ClampsOutOfRange) {
  const auto d = box_to_discrete({0.0, 1.0, 0.8, 0.8}, 10, 10);
  EXPECT_GE(d.x1, 0);
  EXPECT_LE(d.y2, 10);
  EXPECT_LE(d.x1, d.x2);
}

TEST(BoxIou, Identity) {
  const Box b{0.3, 0.6, 0.2, 0.4};
  EXPECT_DOUBLE_EQ(box_iou(b, b), 1.0);
}

TEST(BoxIou, OneSeventh) {
  EXPECT_NEAR(box_iou(corners(0, 0, 0.4, 0.4), corners(0.2, 0.2, 0.6, 0.6)), 1.0 / 7.0, 1e-12);
}

TEST(BoxIou, Disjoint) { EXPECT_EQ(box_iou(corners(0, 0, 0.1, 0.1), corners(0.5, 0.5, 0.6, 0.6)), 0.0); }

TEST(BoxIou, ZeroAreaIsZero) { EXPECT_EQ(box_iou({0.5, 0.5, 0, 0}, {0.5, 0.5, 0, 0}), 0.0); }

TEST(BoxGiou, Identity) {
  const Box b{0.3, 0.6, 0.2, 0.4};
  EXPECT_DOUBLE_EQ(box_giou(b, b), 1.0);
}

TEST(BoxGiou, SeparatedUnitBoxes) {
  // corners (0,0,1,1) and (2,2,3,3) in a frame of 4 units
  EXPECT_NEAR(box_giou(corners(0, 0, 0.25, 0.25), corners(0.5, 0.5, 0.75, 0.75)), -7.0 / 9.0, 1e-12);
}

TEST(BoxGiou, MatchesRasterOracle) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto a = testutil::random_box(rng), b = testutil::random_box(rng);
    EXPECT_NEAR(box_giou(a, b), oracle::raster_box_giou(a, b, 1 << 20), 1e-4);
  }
}

TEST(BoxIou, MatchesRasterOracleOn1000Pairs) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    const auto a = testutil::random_box(rng), b = testutil::random_box(rng);
    ASSERT_NEAR(box_iou(a, b), oracle::raster_box_iou(a, b, 1 << 20), 1e-4) << i;
  }
}

TEST(BoxIou, Symmetric) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    const auto a = testutil::random_box(rng, 0.0), b = testutil::random_box(rng, 0.0);
    ASSERT_EQ(box_iou(a, b), box_iou(b, a));
  }
}

TEST(BoxGiou, NeverExceedsIou) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 1000; ++i) {
    const auto a = testutil::random_box(rng), b = testutil::random_box(rng);
    ASSERT_LE(box_giou(a, b), box_iou(a, b) + 1e-15);
  }
  // Nested boxes: the hull is the union, so the two agree.
  const auto outer = corners(0.1, 0.1, 0.9, 0.9), inner = corners(0.3, 0.3, 0.5, 0.5);
  EXPECT_NEAR(box_giou(outer, inner), box_iou(outer, inner), 1e-15);
}

TEST(MaskMinBbox, SinglePixel) {
  BinaryMask m(8, 8);
  m.set(3, 3, true);
  const auto b = mask_min_bbox(m);
  EXPECT_NEAR(b.x1(), 3.0 / 8, 1e-12);
  EXPECT_NEAR(b.y1(), 3.0 / 8, 1e-12);
  EXPECT_NEAR(b.x2(), 4.0 / 8, 1e-12);
  EXPECT_NEAR(b.y2(), 4.0 / 8, 1e-12);
}

TEST(MaskMinBbox, AllOnes) {
  const auto b = mask_min_bbox(BinaryMask(5, 7, 1));
  EXPECT_NEAR(b.cx, 0.5, 1e-12);
  EXPECT_NEAR(b.cy, 0.5, 1e-12);
  EXPECT_NEAR(b.w, 1.0, 1e-12);
  EXPECT_NEAR(b.h, 1.0, 1e-12);
}

TEST(MaskMinBbox, EmptyThrows) { EXPECT_THROW(mask_min_bbox(BinaryMask(4, 4)), EmptyMask); }

TEST(MaskMinBbox, MatchesScanOracle) {
  std::mt19937_64 rng(15);
  for (int i = 0; i < 200; ++i) {
    auto m = testutil::random_mask(rng, 20, 24, 0.02);
    if (m.empty()) continue;
    int x0 = 99, y0 = 99, x1 = -1, y1 = -1;
    for (int y = 0; y < 20; ++y) {
      for (int x = 0; x < 24; ++x) {
        if (!m.at(y, x)) continue;
        x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
      }
    }
    const auto b = mask_min_bbox(m);
    ASSERT_NEAR(b.x1() * 24, x0, 1e-9);
    ASSERT_NEAR(b.y1() * 20, y0, 1e-9);
    ASSERT_NEAR(b.x2() * 24, x1 + 1, 1e-9);
    ASSERT_NEAR(b.y2() * 20, y1 + 1, 1e-9);
  }
}

TEST(BoxToMask, Full) { EXPECT_EQ(box_to_mask({0, 0, 4, 4}, 4, 4).count(), 16u); }

TEST(BoxToMask, ZeroArea) { EXPECT_EQ(box_to_mask({2, 2, 2, 2}, 4, 4).count(), 0u); }

TEST(BoxToMask, InnerCells) {
  const auto m = box_to_mask({1, 1, 3, 3}, 4, 4);
  EXPECT_EQ(m.count(), 4u);
  for (int y = 1; y < 3; ++y) {
    for (int x = 1; x < 3; ++x) EXPECT_EQ(m.at(y, x), 1);
  }
}

TEST(BoxDiscreteRoundTrip, RecoversCorners) {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 500; ++i) {
    const auto box = testutil::random_box(rng, 0.02);
    const auto d = box_to_discrete(box, 16, 12);
    ASSERT_FALSE(d.empty());
    const auto back = box_to_discrete(mask_min_bbox(box_to_mask(d, 16, 12)), 16, 12);
    ASSERT_EQ(back, d);
  }
}

TEST(ThresholdMask, StrictAtHalf) { EXPECT_EQ(threshold_mask(ProbMask(3, 3, 0.5), 0.5).count(), 0u); }

TEST(ThresholdMask, AboveHalf) { EXPECT_EQ(threshold_mask(ProbMask(3, 3, 0.6), 0.5).count(), 9u); }

TEST(ThresholdMask, Checkerboard) {
  ProbMask p(4, 4);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) p.set(y, x, (x + y) % 2 ? 0.6 : 0.4);
  }
  const auto m = threshold_mask(p, 0.5);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) EXPECT_EQ(m.at(y, x), (x + y) % 2);
  }
}
