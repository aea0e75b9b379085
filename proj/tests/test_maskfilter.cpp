#include <gtest/gtest.h>

#include "selfdepth/maskfilter.hpp"

using namespace selfdepth;

namespace {

TEST(MinReprojection, PicksLowerErrorAndK) {
  Tensor prev = Tensor::from_data({1, 1, 1, 2}, {0.2, 0.6});
  Tensor next = Tensor::from_data({1, 1, 1, 2}, {0.5, 0.4});
  PixelSelection s = min_reprojection(prev, next);
  EXPECT_DOUBLE_EQ(s.fused.at(0), 0.2);
  EXPECT_DOUBLE_EQ(s.chosen_k.at(0), -1.0);
  EXPECT_DOUBLE_EQ(s.fused.at(1), 0.4);
  EXPECT_DOUBLE_EQ(s.chosen_k.at(1), 1.0);
}

TEST(MinReprojection, TieSelectsPrev) {
  Tensor prev = Tensor::from_data({1, 1, 1, 1}, {0.3});
  Tensor next = Tensor::from_data({1, 1, 1, 1}, {0.3});
  PixelSelection s = min_reprojection(prev, next);
  EXPECT_DOUBLE_EQ(s.chosen_k.at(0), -1.0);
}

TEST(MinReprojection, FusedNeverExceedsEitherMap) {
  Rng rng(5);
  Tensor prev = random_uniform({1, 1, 6, 6}, rng);
  Tensor next = random_uniform({1, 1, 6, 6}, rng);
  PixelSelection s = min_reprojection(prev, next);
  for (int i = 0; i < prev.size(); ++i) {
    EXPECT_LE(s.fused.at(i), prev.at(i));
    EXPECT_LE(s.fused.at(i), next.at(i));
  }
}

TEST(MinReprojection, IdenticalInputsPassThrough) {
  Rng rng(7);
  Tensor e = random_uniform({1, 1, 5, 5}, rng);
  PixelSelection s = min_reprojection(e, e);
  for (int i = 0; i < e.size(); ++i) {
    EXPECT_DOUBLE_EQ(s.fused.at(i), e.at(i));
    EXPECT_DOUBLE_EQ(s.chosen_k.at(i), -1.0);
  }
}

TEST(MinReprojection, GradientOnlyThroughSelectedBranch) {
  Tensor prev = Tensor::from_data({1, 1, 1, 2}, {0.2, 0.6}, true);
  Tensor next = Tensor::from_data({1, 1, 1, 2}, {0.5, 0.4}, true);
  Tape tape;
  PixelSelection s = min_reprojection(prev, next);
  tape.backward(sum(s.fused));
  EXPECT_DOUBLE_EQ(prev.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(prev.grad()[1], 0.0);
  EXPECT_DOUBLE_EQ(next.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(next.grad()[1], 1.0);
}

TEST(Automask, StaticSceneMasksEverything) {
  // supports identical to the target: unwarped error is exactly 0, so any
  // nonzero warped error leaves mu = 0 everywhere
  Rng rng(11);
  Tensor target = random_uniform({1, 3, 6, 8}, rng);
  Tensor warped_prev = random_uniform({1, 3, 6, 8}, rng);
  Tensor warped_next = random_uniform({1, 3, 6, 8}, rng);
  Tensor mu = automask(target, target, target, warped_prev, warped_next, 0.85);
  for (int i = 0; i < mu.size(); ++i) EXPECT_DOUBLE_EQ(mu.at(i), 0.0);
}

TEST(Automask, TieMasks) {
  Tensor u = Tensor::from_data({1, 1, 1, 2}, {0.3, 0.2});
  Tensor w = Tensor::from_data({1, 1, 1, 2}, {0.3, 0.1});
  Tensor mu = automask_from_errors(u, w);
  EXPECT_DOUBLE_EQ(mu.at(0), 0.0);  // equal errors carry no signal
  EXPECT_DOUBLE_EQ(mu.at(1), 1.0);  // warping strictly helps
}

TEST(Automask, CorrectWarpKeepsTexturedPixels) {
  // supports differ from target, warped copies reproduce it: all pixels kept
  Rng rng(13);
  Tensor target = random_uniform({1, 3, 6, 8}, rng);
  Tensor prev = random_uniform({1, 3, 6, 8}, rng);
  Tensor next = random_uniform({1, 3, 6, 8}, rng);
  Tensor mu = automask(target, prev, next, target, target, 0.85);
  for (int i = 0; i < mu.size(); ++i) EXPECT_DOUBLE_EQ(mu.at(i), 1.0);
}

TEST(Automask, NothingRecordedOnTape) {
  Rng rng(17);
  Tensor target = random_uniform({1, 3, 4, 4}, rng);
  Tensor w1 = random_uniform({1, 3, 4, 4}, rng);
  w1.set_requires_grad(true);
  Tape tape;
  Tensor mu = automask(target, target, target, w1, w1, 0.85);
  EXPECT_EQ(tape.node_count(), 0u);
  EXPECT_FALSE(mu.requires_grad());
}

TEST(Automask, MaskedLossNeverExceedsUnmasked) {
  Rng rng(19);
  for (int t = 0; t < 10; ++t) {
    Tensor err = random_uniform({1, 1, 6, 6}, rng);  // nonnegative error map
    Tensor valid = Tensor::zeros({1, 1, 6, 6});
    Tensor mu = Tensor::zeros({1, 1, 6, 6});
    for (int i = 0; i < 36; ++i) {
      valid.mutable_data()[i] = rng.uniform() < 0.8 ? 1.0 : 0.0;
      mu.mutable_data()[i] = rng.uniform() < 0.6 ? 1.0 : 0.0;
    }
    bool warn = false;
    double unmasked = masked_mean(err, valid, &warn).at(0);
    double masked = masked_mean(err * mu, valid, &warn).at(0);
    EXPECT_LE(masked, unmasked + 1e-15);
  }
}

TEST(FilterLabels, DropsMaskedAndUnselectedPositives) {
  LabelMask m;
  m.height = 2;
  m.width = 2;
  // one positive + one negative per target pixel
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      m.entries.push_back({y, x, y, x, PairLabel::kPositive});
      m.entries.push_back({y, x, 1 - y, 1 - x, PairLabel::kNegative});
    }
  // chosen_k: -1 everywhere except pixel (0,1); mu masks pixel (1,0)
  Tensor chosen = Tensor::from_data({1, 1, 2, 2}, {-1, 1, -1, -1});
  Tensor mu = Tensor::from_data({1, 1, 2, 2}, {1, 1, 0, 1});
  filter_labels(m, chosen, -1, mu);
  // pixel (0,0): kept; (0,1): lost selection; (1,0): masked; (1,1): kept
  EXPECT_EQ(m.entries[0].label, PairLabel::kPositive);
  EXPECT_EQ(m.entries[1].label, PairLabel::kNegative);
  EXPECT_EQ(m.entries[2].label, PairLabel::kIgnore);
  EXPECT_EQ(m.entries[3].label, PairLabel::kIgnore);
  EXPECT_EQ(m.entries[4].label, PairLabel::kIgnore);
  EXPECT_EQ(m.entries[5].label, PairLabel::kIgnore);
  EXPECT_EQ(m.entries[6].label, PairLabel::kPositive);
  EXPECT_EQ(m.entries[7].label, PairLabel::kNegative);
}

}  // namespace
