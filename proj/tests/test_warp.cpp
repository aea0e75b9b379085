#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "selfdepth/camera.hpp"
#include "selfdepth/warp.hpp"

using namespace selfdepth;

namespace {

Tensor identity_coords(int h, int w) {
  Tensor c = Tensor::zeros({1, 2, h, w});
  double* p = c.mutable_data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      p[y * w + x] = x;
      p[h * w + y * w + x] = y;
    }
  return c;
}

TEST(BilinearSample, IdentityCorrespondenceReproducesSource) {
  Rng rng(7);
  Tensor src = random_uniform({1, 3, 6, 9}, rng);
  Tensor out = bilinear_sample(src, identity_coords(6, 9));
  for (int i = 0; i < src.size(); ++i) EXPECT_DOUBLE_EQ(out.at(i), src.at(i));
}

TEST(BilinearSample, IntegerShiftOnRampIsExact) {
  const int h = 5, w = 8;
  Tensor src = Tensor::zeros({1, 1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) src.mutable_data()[y * w + x] = x;
  Tensor coords = identity_coords(h, w);
  for (int i = 0; i < h * w; ++i) coords.mutable_data()[i] += 1.0;  // u + 1
  Tensor out = bilinear_sample(src, coords);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + 1 < w; ++x)
      EXPECT_DOUBLE_EQ(out.at4(0, 0, y, x), x + 1.0);
}

TEST(BilinearSample, MatchesNaiveOracleOnFractionalCoords) {
  Rng rng(11);
  const int h = 7, w = 9;
  Tensor src = random_uniform({1, 2, h, w}, rng);
  Tensor coords = Tensor::zeros({1, 2, h, w});
  double* pc = coords.mutable_data();
  for (int i = 0; i < h * w; ++i) {
    pc[i] = rng.uniform(-1.0, w);      // includes out-of-range, clamped
    pc[h * w + i] = rng.uniform(-1.0, h);
  }
  Tensor got = bilinear_sample(src, coords);
  Tensor want = oracles::naive_bilinear(src, coords);
  for (int i = 0; i < got.size(); ++i) EXPECT_NEAR(got.at(i), want.at(i), 1e-12);
}

TEST(BilinearSample, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  const int h = 5, w = 6;
  Tensor src = random_uniform({1, 2, h, w}, rng);
  Tensor coords = Tensor::zeros({1, 2, h, w});
  double* pc = coords.mutable_data();
  for (int i = 0; i < h * w; ++i) {
    pc[i] = rng.uniform(0.2, w - 1.2);      // strictly fractional, interior
    pc[h * w + i] = rng.uniform(0.2, h - 1.2);
  }
  auto rep_src = grad_check(
      [&](const Tensor& s) { return sum(square(bilinear_sample(s, coords))); },
      src, 1e-5);
  EXPECT_LT(rep_src.max_rel_error, 1e-5);
  auto rep_coords = grad_check(
      [&](const Tensor& c) { return sum(square(bilinear_sample(src, c))); },
      coords, 1e-5);
  EXPECT_LT(rep_coords.max_rel_error, 1e-3);
}

TEST(BilinearSample, ConstantImageStaysConstant) {
  Rng rng(17);
  const int h = 6, w = 6;
  Tensor src = Tensor::full({1, 1, h, w}, 0.42);
  Tensor coords = Tensor::zeros({1, 2, h, w});
  double* pc = coords.mutable_data();
  for (int i = 0; i < h * w; ++i) {
    pc[i] = rng.uniform(0, w - 1);
    pc[h * w + i] = rng.uniform(0, h - 1);
  }
  Tensor out = bilinear_sample(src, coords);
  for (int i = 0; i < out.size(); ++i) EXPECT_NEAR(out.at(i), 0.42, 1e-15);
}

TEST(BilinearSample, ConvexCombinationOfNeighbors) {
  Rng rng(19);
  const int h = 6, w = 7;
  Tensor src = random_uniform({1, 1, h, w}, rng);
  Tensor coords = Tensor::zeros({1, 2, h, w});
  double* pc = coords.mutable_data();
  for (int i = 0; i < h * w; ++i) {
    pc[i] = rng.uniform(0, w - 1);
    pc[h * w + i] = rng.uniform(0, h - 1);
  }
  Tensor out = bilinear_sample(src, coords);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double u = coords.at4(0, 0, y, x), v = coords.at4(0, 1, y, x);
      int x0 = std::min(static_cast<int>(u), w - 2);
      int y0 = std::min(static_cast<int>(v), h - 2);
      double lo = 1e9, hi = -1e9;
      for (int dy : {0, 1})
        for (int dx : {0, 1}) {
          lo = std::min(lo, src.at4(0, 0, y0 + dy, x0 + dx));
          hi = std::max(hi, src.at4(0, 0, y0 + dy, x0 + dx));
        }
      EXPECT_GE(out.at4(0, 0, y, x), lo - 1e-12);
      EXPECT_LE(out.at4(0, 0, y, x), hi + 1e-12);
    }
}

TEST(BilinearSample, ExactAtRandomIntegerCoords) {
  Rng rng(23);
  const int h = 6, w = 8;
  Tensor src = random_uniform({1, 2, h, w}, rng);
  Tensor coords = Tensor::zeros({1, 2, h, w});
  double* pc = coords.mutable_data();
  std::vector<std::pair<int, int>> targets(h * w);
  for (int i = 0; i < h * w; ++i) {
    targets[i] = {rng.uniform_int(w), rng.uniform_int(h)};
    pc[i] = targets[i].first;
    pc[h * w + i] = targets[i].second;
  }
  Tensor out = bilinear_sample(src, coords);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto [tx, ty] = targets[y * w + x];
      for (int c = 0; c < 2; ++c)
        EXPECT_DOUBLE_EQ(out.at4(0, c, y, x), src.at4(0, c, ty, tx));
    }
}

TEST(BilinearSample, ValidityPropagatesFromCorrespondenceMap) {
  const int h = 8, w = 10;
  Intrinsics k{12, 12, 4.5, 3.5};
  Pose pose = Pose::from_vectors({0, 0, 0}, {2000, 0, 0});
  Tensor d = Tensor::full({1, 1, h, w}, 3.0);
  CorrespondenceMap c = correspondence_map({d}, pose, k);
  Rng rng(29);
  Tensor src = random_uniform({1, 3, h, w}, rng);
  WarpResult res = bilinear_sample(src, c);
  for (int i = 0; i < h * w; ++i)
    EXPECT_DOUBLE_EQ(res.validity.at(i), c.in_bounds.at(i));
}

}  // namespace
