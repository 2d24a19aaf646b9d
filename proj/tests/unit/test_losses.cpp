#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <random>

#include "c3vg/errors.hpp"
#include "c3vg/losses.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace c3vg;

namespace {

torch::Tensor box_tensor(const Box& b, torch::Dtype dtype = torch::kFloat64) {
  return torch::tensor({b.cx, b.cy, b.w, b.h}, dtype).unsqueeze(0);
}

torch::Tensor mask_tensor(const BinaryMask& m) {
  auto t = torch::zeros({1, m.height(), m.width()}, torch::kFloat64);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) t[0][y][x] = static_cast<double>(m.at(y, x));
  }
  return t;
}

torch::Tensor saturated(const BinaryMask& m) { return mask_tensor(m) * 100.0 - 50.0; }

// Random integer-cornered box on an n x n grid, as both forms.
std::pair<DiscreteBox, Box> random_grid_box(std::mt19937_64& rng, int n) {
  std::uniform_int_distribution<int> c(0, n);
  int x1 = c(rng), x2 = c(rng), y1 = c(rng), y2 = c(rng);
  if (x1 > x2) std::swap(x1, x2);
  if (y1 > y2) std::swap(y1, y2);
  if (x1 == x2) x2 = std::min(n, x1 + 1), x1 = x2 - 1;
  if (y1 == y2) y2 = std::min(n, y1 + 1), y1 = y2 - 1;
  return {DiscreteBox{x1, y1, x2, y2},
          Box::from_corners(double(x1) / n, double(y1) / n, double(x2) / n, double(y2) / n)};
}

const LossWeights kW{};

}  // namespace

TEST(RecLoss, ZeroAtGold) {
  auto b = torch::tensor({{0.3, 0.4, 0.2, 0.5}});
  EXPECT_NEAR(rec_loss(b, b, kW).item<double>(), 0.0, 1e-7);
}

TEST(RecLoss, WorkedExample) {
  auto pred = box_tensor(Box::from_corners(0, 0, 0.25, 0.25));
  auto gold = box_tensor(Box::from_corners(0.5, 0.5, 0.75, 0.75));
  // cx and cy each differ by 0.5; the extents agree.
  const double expected = 0.5 * (0.5 + 0.5 + 0 + 0) / 4 + 0.2 * (1 + 7.0 / 9.0);
  EXPECT_NEAR(rec_loss(pred, gold, kW).item<double>(), expected, 1e-12);
  EXPECT_NEAR(expected, 0.4806, 1e-4);
}

TEST(RecLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 20; ++i) {
    auto gold = box_tensor(testutil::random_box(rng, 0.1));
    auto pred = box_tensor(testutil::random_box(rng, 0.1));
    auto f = [&](const torch::Tensor& p) { return rec_loss(p, gold, kW); };
    ASSERT_LT(testutil::max_fd_error(f, pred), 1e-4) << i;
  }
}

TEST(RisLoss, NearPerfectPrediction) {
  std::mt19937_64 rng(22);
  const auto m = testutil::random_mask(rng, 16, 16, 0.4);
  auto gold = mask_tensor(m);
  const double g = static_cast<double>(m.count());
  const double residue = 1.0 - (2.0 * g + 1.0) / (2.0 * g + 1.0);  // dice smoothing at exact probabilities
  EXPECT_LT(ris_loss(saturated(m), gold, kW).item<double>(), 1e-6 + residue + 1e-12);
}

TEST(RisLoss, ZeroLogitsHalfGold) {
  BinaryMask m(8, 8);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 8; ++x) m.set(y, x, true);
  }
  const double n = 64, g = 32;
  const double dice = 1.0 - (2.0 * (0.5 * g) + 1.0) / (0.5 * n + g + 1.0);
  EXPECT_NEAR(ris_loss(torch::zeros({1, 8, 8}, torch::kFloat64), mask_tensor(m), kW).item<double>(),
              std::log(2.0) + dice, 1e-12);
}

TEST(RisLoss, ShapeMismatch) {
  EXPECT_THROW(ris_loss(torch::zeros({1, 8, 8}), torch::zeros({1, 8, 9}), kW), ShapeMismatch);
  EXPECT_THROW(ris_loss(torch::zeros({8, 8}), torch::zeros({8, 8}), kW), ShapeMismatch);
}

TEST(RisLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 20; ++i) {
    auto gold = mask_tensor(testutil::random_mask(rng, 6, 6, 0.4));
    auto logits = torch::randn({1, 6, 6}, torch::kFloat64) * 2;
    auto f = [&](const torch::Tensor& l) { return ris_loss(l, gold, kW); };
    ASSERT_LT(testutil::max_fd_error(f, logits), 1e-4) << i;
  }
}

TEST(LossM2b, AllMassInside) {
  BinaryMask m(8, 8);
  m.set(3, 3, true);
  m.set(4, 4, true);
  EXPECT_NEAR(loss_m2b(saturated(m), box_tensor(Box::from_corners(0.25, 0.25, 0.75, 0.75)), kW).item<double>(), 0.0,
              1e-12);
}

TEST(LossM2b, HalfInside) {
  // Equal soft mass in two cells, one inside the box.
  auto logits = torch::full({1, 4, 4}, -1e4, torch::kFloat64);
  logits[0][0][0] = 0.0;
  logits[0][3][3] = 0.0;
  EXPECT_NEAR(loss_m2b(logits, box_tensor(Box::from_corners(0, 0, 0.5, 0.5)), kW).item<double>(), 0.5, 1e-12);
}

TEST(LossM2b, GuardOnNoMass) {
  auto logits = torch::full({1, 4, 4}, -100.0, torch::kFloat64);
  EXPECT_EQ(loss_m2b(logits, box_tensor({0.5, 0.5, 0.2, 0.2}), kW).item<double>(), 0.0);
}

TEST(LossM2b, MatchesOracleAtSaturation) {
  std::mt19937_64 rng(24);
  for (int i = 0; i < 100; ++i) {
    auto m = testutil::random_mask(rng, 32, 32, 0.2);
    if (m.empty()) continue;
    const auto [d, box] = random_grid_box(rng, 32);
    ASSERT_NEAR(loss_m2b(saturated(m), box_tensor(box), kW).item<double>(), oracle::m2b(m, d), 1e-6) << i;
  }
}

TEST(LossM2b, InUnitInterval) {
  std::mt19937_64 rng(25);
  for (int i = 0; i < 200; ++i) {
    auto v = loss_m2b(torch::randn({2, 8, 8}) * 4, torch::rand({2, 4}), kW).item<double>();
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0 + 1e-6);
  }
}

TEST(LossM2b, MaskGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(26);
  for (int i = 0; i < 20; ++i) {
    auto box = box_tensor(testutil::random_box(rng, 0.2));
    auto logits = torch::randn({1, 6, 6}, torch::kFloat64);
    auto f = [&](const torch::Tensor& l) { return loss_m2b(l, box, kW); };
    ASSERT_LT(testutil::max_fd_error(f, logits), 1e-4) << i;
  }
}

TEST(LossB2m, ZeroAtMaskBbox) {
  BinaryMask m(8, 8);
  m.set(2, 3, true);
  m.set(5, 4, true);
  auto box = box_tensor(Box::from_corners(3.0 / 8, 2.0 / 8, 5.0 / 8, 6.0 / 8));
  EXPECT_NEAR(loss_b2m(saturated(m), box, kW).item<double>(), 0.0, 1e-12);
}

TEST(LossB2m, SixSevenths) {
  BinaryMask m(8, 8);
  for (int y = 2; y < 6; ++y) {
    for (int x = 2; x < 6; ++x) m.set(y, x, true);
  }
  auto box = box_tensor(Box::from_corners(0, 0, 0.5, 0.5));
  EXPECT_NEAR(loss_b2m(saturated(m), box, kW).item<double>(), 6.0 / 7.0, 1e-12);
}

TEST(LossB2m, EmptyMaskGuard) {
  EXPECT_EQ(loss_b2m(torch::full({1, 4, 4}, -3.0), box_tensor({0.5, 0.5, 0.3, 0.3}, torch::kFloat32), kW).item<double>(),
            0.0);
}

TEST(LossB2m, MatchesOracle) {
  std::mt19937_64 rng(27);
  for (int i = 0; i < 100; ++i) {
    auto m = testutil::random_mask(rng, 32, 32, 0.01);
    if (m.empty()) continue;
    const auto box = testutil::random_box(rng, 0.05);
    ASSERT_NEAR(loss_b2m(saturated(m), box_tensor(box), kW).item<double>(), oracle::b2m(m, box), 5e-3) << i;
  }
}

TEST(LossB2m, BoxGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(28);
  for (int i = 0; i < 20; ++i) {
    auto logits = saturated(testutil::random_mask(rng, 16, 16, 0.05));
    auto f = [&](const torch::Tensor& b) { return loss_b2m(logits, b, kW); };
    ASSERT_LT(testutil::max_fd_error(f, box_tensor(testutil::random_box(rng, 0.2))), 1e-4) << i;
  }
}

TEST(LossB2m, InUnitInterval) {
  for (int i = 0; i < 200; ++i) {
    auto v = loss_b2m(torch::randn({2, 8, 8}) * 4, torch::rand({2, 4}), kW).item<double>();
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0 + 1e-6);
  }
}

TEST(GradientRouting, M2bLeavesBoxAloneB2mLeavesMaskAlone) {
  auto logits = torch::randn({2, 8, 8}, torch::dtype(torch::kFloat64).requires_grad(true));
  auto boxes = torch::tensor({{0.5, 0.5, 0.4, 0.4}, {0.3, 0.3, 0.2, 0.3}}, torch::dtype(torch::kFloat64))
                   .requires_grad_(true);
  loss_m2b(logits, boxes, kW).backward();
  EXPECT_FALSE(boxes.grad().defined() && boxes.grad().abs().sum().item<double>() > 0);
  EXPECT_GT(logits.grad().abs().sum().item<double>(), 0.0);

  auto logits2 = (torch::randn({2, 8, 8}, torch::kFloat64) * 5).requires_grad_(true);
  auto boxes2 = boxes.detach().clone().requires_grad_(true);
  loss_b2m(logits2, boxes2, kW).backward();
  EXPECT_FALSE(logits2.grad().defined() && logits2.grad().abs().sum().item<double>() > 0);
  EXPECT_GT(boxes2.grad().abs().sum().item<double>(), 0.0);
}

TEST(LossBcc, Composition) {
  LossWeights w;
  EXPECT_DOUBLE_EQ(w.lambda_1 * 0.5 + w.lambda_2 * 0.5, 2.0);
  auto logits = torch::randn({2, 8, 8}, torch::kFloat64) * 3;
  auto boxes = torch::rand({2, 4}, torch::kFloat64);
  const double expected = loss_b2m(logits, boxes, w).item<double>() + 3.0 * loss_m2b(logits, boxes, w).item<double>();
  EXPECT_NEAR(loss_bcc(logits, boxes, w).item<double>(), expected, 1e-12);
}

TEST(LossBcc, ZeroWhenBothZero) {
  BinaryMask m(8, 8);
  m.set(2, 2, true);
  m.set(4, 5, true);
  auto box = box_tensor(mask_min_bbox(m));
  EXPECT_NEAR(loss_bcc(saturated(m), box, kW).item<double>(), 0.0, 1e-12);
}

TEST(LossBcc, NonNegative) {
  for (int i = 0; i < 1000; ++i) {
    ASSERT_GE(loss_bcc(torch::randn({1, 6, 6}) * 3, torch::rand({1, 4}), kW).item<double>(), 0.0);
  }
}

TEST(TotalLoss, AllOnesGivesDefaultComposition) {
  const double one = 1.0;
  EXPECT_NEAR(compose_total(one, one, one, one, one, one, LossWeights{}), 2.35, 1e-12);
}

TEST(TotalLoss, CoarseWeightZeroDropsCoarse) {
  LossWeights w;
  w.lambda_c = 0.0;
  EXPECT_EQ(compose_total(7.0, 9.0, 0.0, 0.0, 0.0, 0.0, w), 0.0);
}

TEST(TotalLoss, ReportRecomputes) {
  torch::manual_seed(3);
  const auto f64 = torch::kFloat64;
  StagePrediction coarse, fine;
  coarse.box = torch::rand({2, 4}, f64);
  fine.box = torch::rand({2, 4}, f64);
  coarse.mask_logits = torch::randn({2, 16, 16}, f64);
  fine.mask_logits = torch::randn({2, 16, 16}, f64) * 4;
  auto gold_boxes = torch::tensor({{0.5, 0.5, 0.3, 0.3}, {0.4, 0.6, 0.2, 0.2}}, f64);
  auto gold_masks = (torch::rand({2, 16, 16}) > 0.7).to(f64);
  for (bool on_coarse : {false, true}) {
    const auto r = total_loss(coarse, fine, gold_boxes, gold_masks, kW, on_coarse).report();
    EXPECT_NEAR(r.recompute_total(kW), r.total, 1e-12);
    const double by_hand = 0.3 * (0.5 * r.rec_coarse + r.ris_coarse) + (0.5 * r.rec_fine + r.ris_fine) +
                           0.1 * (1.0 * r.b2m + 3.0 * r.m2b);
    EXPECT_NEAR(by_hand, r.total, 1e-12);
  }
}

TEST(LossWeights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.t = 1.0;
  EXPECT_THROW(w.validate(), BadConfig);
  w = LossWeights{};
  w.lambda_bcc = -0.1;
  EXPECT_THROW(w.validate(), BadConfig);
}
