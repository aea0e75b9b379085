#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "selfdepth/losses.hpp"
#include "selfdepth/maskfilter.hpp"

using namespace selfdepth;

namespace {

TEST(Ssim, IdenticalSignalsScoreOne) {
  Rng rng(7);
  Tensor img = random_uniform({1, 3, 8, 8}, rng);
  Tensor s = ssim_map(img, img);
  for (int i = 0; i < s.size(); ++i) EXPECT_NEAR(s.at(i), 1.0, 1e-12);
}

TEST(Ssim, ConstantOffsetMatchesWindowFormula) {
  const double c = 0.3, off = 0.5;
  Tensor a = Tensor::full({1, 1, 6, 6}, c);
  Tensor b = Tensor::full({1, 1, 6, 6}, c + off);
  Tensor s = ssim_map(a, b);
  std::vector<double> wa(9, c), wb(9, c + off);
  const double want = oracles::ssim_window(wa, wb);
  // every pixel sees constant windows, border statistics included
  for (int i = 0; i < s.size(); ++i) EXPECT_NEAR(s.at(i), want, 1e-12);
}

TEST(Ssim, MatchesWindowOracleOnRandomInterior) {
  Rng rng(11);
  const int h = 7, w = 9;
  Tensor a = random_uniform({1, 1, h, w}, rng);
  Tensor b = random_uniform({1, 1, h, w}, rng);
  Tensor s = ssim_map(a, b);
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      std::vector<double> wa, wb;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          wa.push_back(a.at4(0, 0, y + dy, x + dx));
          wb.push_back(b.at4(0, 0, y + dy, x + dx));
        }
      EXPECT_NEAR(s.at4(0, 0, y, x), oracles::ssim_window(wa, wb), 1e-12);
    }
}

TEST(Ssim, GradientMatchesFiniteDifferences) {
  Rng rng(13);
  Tensor a = random_uniform({1, 1, 8, 8}, rng);
  Tensor b = random_uniform({1, 1, 8, 8}, rng);
  auto rep = grad_check(
      [&](const Tensor& x) { return mean(ssim_map(x, b)); }, a, 1e-5);
  EXPECT_LT(rep.max_rel_error, 1e-3);
}

TEST(WarpCost, ZeroOnIdenticalInputs) {
  Rng rng(17);
  Tensor img = random_uniform({1, 3, 6, 6}, rng);
  EXPECT_NEAR(warp_cost(img, img, 0.85).at(0), 0.0, 1e-12);
}

TEST(WarpCost, AlphaZeroIsMeanAbsoluteDifference) {
  Tensor a = Tensor::from_data({1, 1, 1, 1}, {0.2});
  Tensor b = Tensor::from_data({1, 1, 1, 1}, {0.5});
  EXPECT_NEAR(warp_cost(a, b, 0.0).at(0), 0.3, 1e-12);
}

TEST(WarpCost, ComposesFromSsimAndL1Oracles) {
  Rng rng(19);
  const int h = 6, w = 7;
  const double alpha = 0.85;
  Tensor a = random_uniform({1, 1, h, w}, rng);
  Tensor b = random_uniform({1, 1, h, w}, rng);
  const Tensor got = warp_cost(a, b, alpha);
  // hand-composed from the per-window SSIM oracle plus the L1 term
  double acc = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::vector<double> wa, wb;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          wa.push_back(a.at4(0, 0, yy, xx));
          wb.push_back(b.at4(0, 0, yy, xx));
        }
      const double s = oracles::ssim_window(wa, wb);
      acc += alpha * (1 - s) / 2 +
             (1 - alpha) * std::fabs(a.at4(0, 0, y, x) - b.at4(0, 0, y, x));
    }
  EXPECT_NEAR(got.at(0), acc / (h * w), 1e-12);
}

TEST(WarpCost, EmptyValidityMaskYieldsZeroWithWarning) {
  Rng rng(23);
  Tensor a = random_uniform({1, 1, 4, 4}, rng);
  Tensor b = random_uniform({1, 1, 4, 4}, rng);
  bool warn = false;
  Tensor v = Tensor::zeros({1, 1, 4, 4});
  EXPECT_DOUBLE_EQ(warp_cost(a, b, 0.85, v, &warn).at(0), 0.0);
  EXPECT_TRUE(warn);
}

TEST(WarpCost, PositiveScalingPreservesL1Ordering) {
  Rng rng(29);
  for (int t = 0; t < 20; ++t) {
    Tensor i0 = random_uniform({1, 1, 5, 5}, rng);
    Tensor w1 = random_uniform({1, 1, 5, 5}, rng);
    Tensor w2 = random_uniform({1, 1, 5, 5}, rng);
    const double c = rng.uniform(0.1, 10.0);
    double l1 = warp_cost(i0, w1, 0.0).at(0);
    double l2 = warp_cost(i0, w2, 0.0).at(0);
    double l1s = warp_cost(i0 * c, w1 * c, 0.0).at(0);
    double l2s = warp_cost(i0 * c, w2 * c, 0.0).at(0);
    EXPECT_EQ(l1 < l2, l1s < l2s);
  }
}

TEST(ContrastivePair, TrivialValues) {
  std::vector<double> z{0, 0};
  std::vector<double> a{0.5, 0};   // d = 0.5
  std::vector<double> b{0.4, 0};   // d = 0.4
  std::vector<double> c{1.5, 0};   // d = 1.5 >= m
  EXPECT_NEAR(contrastive_pair(1, a, z, 1.0), 0.125, 1e-15);
  EXPECT_NEAR(contrastive_pair(0, b, z, 1.0), 0.18, 1e-15);
  EXPECT_DOUBLE_EQ(contrastive_pair(0, c, z, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(contrastive_pair(-1, a, z, 1.0), 0.0);
}

LabelMask single_pair(int h, int w, PairLabel label) {
  LabelMask m;
  m.height = h;
  m.width = w;
  m.entries.push_back({0, 0, 0, 1, label});
  return m;
}

TEST(Contrastive, MarginSatisfiedNegativeHasZeroGradient) {
  // two orthogonal unit features: d = sqrt(2) >= m = 1
  Tensor f = Tensor::from_data({1, 2, 1, 2}, {1, 0, 0, 1}, true);
  Tape tape;
  Tensor loss = pixelwise_contrastive(f, f, single_pair(1, 2, PairLabel::kNegative), 1.0);
  EXPECT_DOUBLE_EQ(loss.at(0), 0.0);
  tape.backward(loss);
  for (double g : f.grad()) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Contrastive, KinkAtMarginIsFlaggedByGradCheck) {
  // negative pair at exactly d = m: max(0, m-d) kinks, excluded from sweeps
  Tensor f = Tensor::from_data({1, 1, 1, 2}, {0.0, 1.0});
  auto rep = grad_check(
      [](const Tensor& t) {
        return pixelwise_contrastive(t, t, single_pair(1, 2, PairLabel::kNegative),
                                     1.0);
      },
      f, 1e-3);
  EXPECT_GT(rep.max_rel_error, 1e-3);  // non-smooth point detected
}

TEST(Contrastive, IdentityPositivesAreZero) {
  Rng rng(31);
  Tensor f = random_uniform({1, 4, 5, 5}, rng);
  LabelMask m;
  m.height = 5;
  m.width = 5;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) m.entries.push_back({y, x, y, x, PairLabel::kPositive});
  EXPECT_DOUBLE_EQ(pixelwise_contrastive(f, f, m, 0.5).at(0), 0.0);
}

TEST(Contrastive, EmptyMaskWarns) {
  Rng rng(37);
  Tensor f = random_uniform({1, 2, 3, 3}, rng);
  LabelMask m;
  m.height = 3;
  m.width = 3;
  bool warn = false;
  EXPECT_DOUBLE_EQ(pixelwise_contrastive(f, f, m, 0.5, &warn).at(0), 0.0);
  EXPECT_TRUE(warn);
}

TEST(Contrastive, MatchesBruteForcePairLoop) {
  Rng rng(41);
  const int h = 6, w = 6, c = 3;
  Tensor f1 = random_uniform({1, c, h, w}, rng);
  Tensor f2 = random_uniform({1, c, h, w}, rng);
  LabelMask m;
  m.height = h;
  m.width = w;
  for (int t = 0; t < 40; ++t) {
    PairEntry e;
    e.p1y = rng.uniform_int(h);
    e.p1x = rng.uniform_int(w);
    e.p2y = rng.uniform_int(h);
    e.p2x = rng.uniform_int(w);
    int pick = rng.uniform_int(3);
    e.label = pick == 0   ? PairLabel::kPositive
              : pick == 1 ? PairLabel::kNegative
                          : PairLabel::kIgnore;
    m.entries.push_back(e);
  }
  const double margin = 0.8;
  double want = 0;
  int counted = 0;
  for (const auto& e : m.entries) {
    std::vector<double> a, b;
    for (int ch = 0; ch < c; ++ch) {
      a.push_back(f1.at4(0, ch, e.p1y, e.p1x));
      b.push_back(f2.at4(0, ch, e.p2y, e.p2x));
    }
    want += oracles::contrastive_pair_ref(static_cast<int>(e.label), a, b, margin);
    if (e.label != PairLabel::kIgnore) ++counted;
  }
  want /= counted;
  EXPECT_NEAR(pixelwise_contrastive(f1, f2, m, margin).at(0), want, 1e-12);
}

CorrespondenceMap identity_cmap(int h, int w) {
  Intrinsics k{10, 10, (w - 1) / 2.0, (h - 1) / 2.0};
  Tensor d = Tensor::full({1, 1, h, w}, 5.0);
  return correspondence_map({d}, Pose::identity(), k);
}

TEST(Mining, ExclusionRadiusRespected) {
  auto cmap = identity_cmap(10, 10);
  LabelMask m = mine_negatives(cmap, MiningStrategy::kGlobal, 4, 3.0, 99);
  for (const auto& e : m.entries) {
    if (e.label != PairLabel::kNegative) continue;
    // identity correspondences: true match is at (p1x, p1y)
    const double du = e.p2x - e.p1x, dv = e.p2y - e.p1y;
    EXPECT_GT(std::sqrt(du * du + dv * dv), 3.0);
  }
}

TEST(Mining, RatioNegativesPerPositive) {
  auto cmap = identity_cmap(10, 10);
  LabelMask m = mine_negatives(cmap, MiningStrategy::kGlobal, 4, 3.0, 7);
  EXPECT_EQ(m.count(PairLabel::kPositive), 100u);
  EXPECT_EQ(m.count(PairLabel::kNegative), 400u);
  // grouped: each positive followed by exactly `ratio` negatives
  for (std::size_t i = 0; i < m.entries.size(); i += 5) {
    EXPECT_EQ(m.entries[i].label, PairLabel::kPositive);
    for (int j = 1; j <= 4; ++j)
      EXPECT_EQ(m.entries[i + j].label, PairLabel::kNegative);
  }
}

TEST(Mining, LocalStaysInsideChebyshevWindow) {
  auto cmap = identity_cmap(64, 96);
  LabelMask m = mine_negatives(cmap, MiningStrategy::kLocal, 4, 3.0, 17);
  for (const auto& e : m.entries) {
    if (e.label != PairLabel::kNegative) continue;
    EXPECT_LE(std::abs(e.p2x - e.p1x), kLocalMiningWindow);
    EXPECT_LE(std::abs(e.p2y - e.p1y), kLocalMiningWindow);
  }
}

TEST(Mining, GlobalLocalSplitsRatio) {
  auto cmap = identity_cmap(64, 96);
  LabelMask m = mine_negatives(cmap, MiningStrategy::kGlobalLocal, 4, 3.0, 23);
  // sampled far-field negatives exist (outside any local window)
  bool saw_far = false;
  for (const auto& e : m.entries)
    if (e.label == PairLabel::kNegative &&
        (std::abs(e.p2x - e.p1x) > kLocalMiningWindow ||
         std::abs(e.p2y - e.p1y) > kLocalMiningWindow))
      saw_far = true;
  EXPECT_TRUE(saw_far);
}

TEST(Mining, WindowSmallerThanExclusionDiscFails) {
  auto cmap = identity_cmap(64, 96);
  EXPECT_THROW(
      mine_negatives(cmap, MiningStrategy::kLocal, 4, kLocalMiningWindow, 5),
      MiningError);
}

TEST(Mining, DeterministicForFixedSeed) {
  auto cmap = identity_cmap(12, 12);
  LabelMask a = mine_negatives(cmap, MiningStrategy::kGlobalLocal, 3, 2.0, 31);
  LabelMask b = mine_negatives(cmap, MiningStrategy::kGlobalLocal, 3, 2.0, 31);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    EXPECT_EQ(a.entries[i].p2y, b.entries[i].p2y);
    EXPECT_EQ(a.entries[i].p2x, b.entries[i].p2x);
  }
}

TEST(Smoothness, ConstantDepthIsZero) {
  Rng rng(43);
  Tensor img = random_uniform({1, 3, 6, 8}, rng);
  Tensor d = Tensor::full({1, 1, 6, 8}, 4.0);
  EXPECT_DOUBLE_EQ(smoothness_loss(d, img, 0.001).at(0), 0.0);
}

TEST(Smoothness, RampOnConstantImageClosedForm) {
  const int h = 6, w = 8;
  const double slope = 0.25, lambda = 0.001;
  Tensor img = Tensor::full({1, 3, h, w}, 0.5);
  Tensor d = Tensor::zeros({1, 1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) d.mutable_data()[y * w + x] = slope * x;
  // H*(W-1) u-terms of |slope|*e^0, normalized by H*W
  const double want = lambda * slope * h * (w - 1) / (h * w);
  EXPECT_NEAR(smoothness_loss(d, img, lambda).at(0), want, 1e-15);
}

TEST(Smoothness, ImageEdgeDownWeightsDepthStep) {
  const int h = 6, w = 8;
  Tensor flat = Tensor::full({1, 1, h, w}, 0.5);
  Tensor edge = Tensor::full({1, 1, h, w}, 0.5);
  Tensor d = Tensor::zeros({1, 1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = w / 2; x < w; ++x) {
      d.mutable_data()[y * w + x] = 2.0;  // depth step at w/2
      edge.mutable_data()[y * w + x] = 1.0;  // co-located image edge
    }
  EXPECT_LT(smoothness_loss(d, edge, 0.001).at(0),
            smoothness_loss(d, flat, 0.001).at(0));
}

TEST(Smoothness, GradientMatchesFiniteDifferences) {
  Rng rng(47);
  Tensor img = random_uniform({1, 3, 5, 6}, rng);
  Tensor d0 = random_uniform({1, 1, 5, 6}, rng, 1.0, 5.0);
  auto rep = grad_check(
      [&](const Tensor& d) { return smoothness_loss(d, img, 0.001); }, d0, 1e-5);
  EXPECT_LT(rep.max_rel_error, 1e-3);
}

}  // namespace
