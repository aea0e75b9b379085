#include <gtest/gtest.h>

#include <cmath>

#include "selfdepth/camera.hpp"

using namespace selfdepth;

namespace {

constexpr double kPi = 3.14159265358979323846;

TEST(DispToDepth, EndpointsFromRangeConstants) {
  // 1/(a*0+b) = 100 => b = 0.01 ; 1/(a+b) = 0.1 => a = 9.99
  Tensor disp = Tensor::from_data({1, 1, 1, 3}, {0.0, 1.0, 0.5});
  DepthMap d = disp_to_depth(disp);
  EXPECT_NEAR(d.values.at(0), 100.0, 1e-12);
  EXPECT_NEAR(d.values.at(1), 0.1, 1e-12);
  EXPECT_NEAR(d.values.at(2), 1.0 / 5.005, 1e-12);  // 0.19980...
}

TEST(DispToDepth, StrictlyDecreasingAndInRange) {
  const int n = 101;
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = i / 100.0;
  DepthMap d = disp_to_depth(Tensor::from_data({1, 1, 1, n}, v));
  for (int i = 1; i < n; ++i) EXPECT_LT(d.values.at(i), d.values.at(i - 1));
  for (int i = 0; i < n; ++i) {
    EXPECT_GE(d.values.at(i), kMinDepth);
    EXPECT_LE(d.values.at(i), kMaxDepth);
  }
}

TEST(DispToDepth, OutOfDomainThrows) {
  EXPECT_THROW(disp_to_depth(Tensor::from_data({1, 1, 1, 1}, {1.2})),
               DomainError);
  EXPECT_THROW(disp_to_depth(Tensor::from_data({1, 1, 1, 1}, {-0.1})),
               DomainError);
}

TEST(Rotation, ZeroVectorIsIdentity) {
  Mat3 r = rodrigues({0, 0, 0});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(r(i, j), i == j ? 1.0 : 0.0);
}

TEST(Rotation, QuarterTurnAboutZ) {
  Mat3 r = rodrigues({0, 0, kPi / 2});
  Vec3 v = r * Vec3{1, 0, 0};
  EXPECT_NEAR(v.x, 0.0, 1e-12);
  EXPECT_NEAR(v.y, 1.0, 1e-12);
  EXPECT_NEAR(v.z, 0.0, 1e-12);
}

TEST(Rotation, OrthogonalityAndDeterminant) {
  Rng rng(71);
  for (int t = 0; t < 20; ++t) {
    Vec3 w{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
    Mat3 r = rodrigues(w);
    Mat3 rtr = r.transposed() * r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        EXPECT_NEAR(rtr(i, j), i == j ? 1.0 : 0.0, 1e-10);
    EXPECT_NEAR(r.det(), 1.0, 1e-10);
  }
}

TEST(Rotation, LogIsInverseOfExp) {
  Rng rng(73);
  for (int t = 0; t < 20; ++t) {
    Vec3 w{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    Vec3 back = axis_angle_from_matrix(rodrigues(w));
    EXPECT_NEAR(back.x, w.x, 1e-9);
    EXPECT_NEAR(back.y, w.y, 1e-9);
    EXPECT_NEAR(back.z, w.z, 1e-9);
  }
}

TEST(Rotation, TapeEntriesMatchPlainAndDifferentiate) {
  Rng rng(79);
  Tensor aa = Tensor::from_data({3}, {0.3, -0.2, 0.5});
  Mat3 want = rodrigues({0.3, -0.2, 0.5});
  Tensor r = rotation_from_axis_angle(aa);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.at(i * 3 + j), want(i, j), 1e-14);
  // differentiable, including through the zero-angle series branch
  for (auto point : {std::vector<double>{0.3, -0.2, 0.5},
                     std::vector<double>{1e-6, -2e-6, 1e-6}}) {
    auto rep = grad_check(
        [](const Tensor& w) { return sum(square(rotation_from_axis_angle(w))); },
        Tensor::from_data({3}, point), 1e-6);
    EXPECT_LT(rep.max_rel_error, 1e-5);
  }
}

TEST(Backproject, PrincipalPointOnOpticalAxis) {
  Intrinsics k{80, 80, 47.5, 31.5};
  Vec3 q = backproject(47.5, 31.5, 7.0, k);
  EXPECT_DOUBLE_EQ(q.x, 0.0);
  EXPECT_DOUBLE_EQ(q.y, 0.0);
  EXPECT_DOUBLE_EQ(q.z, 7.0);
}

TEST(Backproject, DirectArithmetic) {
  Intrinsics k{1, 1, 0, 0};
  Vec3 q = backproject(2, 3, 4, k);
  EXPECT_DOUBLE_EQ(q.x, 8.0);
  EXPECT_DOUBLE_EQ(q.y, 12.0);
  EXPECT_DOUBLE_EQ(q.z, 4.0);
}

TEST(Project, InverseOfBackproject) {
  Intrinsics k{1, 1, 0, 0};
  Projection p = project({8, 12, 4}, k, Pose::identity());
  EXPECT_TRUE(p.valid);
  EXPECT_NEAR(p.u, 2.0, 1e-12);
  EXPECT_NEAR(p.v, 3.0, 1e-12);
  EXPECT_NEAR(p.depth, 4.0, 1e-12);
}

TEST(Project, TranslationScaleApplied) {
  // pre-scale t=(0,0,1000) -> effective +1.0 along z
  Intrinsics k{80, 80, 47.5, 31.5};
  Pose pose = Pose::from_vectors({0, 0, 0}, {0, 0, 1000});
  Projection p = project({0, 0, 4}, k, pose);
  EXPECT_TRUE(p.valid);
  EXPECT_NEAR(p.u, k.cx, 1e-12);
  EXPECT_NEAR(p.v, k.cy, 1e-12);
  EXPECT_NEAR(p.depth, 5.0, 1e-12);
}

TEST(Project, BehindCameraInvalid) {
  Intrinsics k{1, 1, 0, 0};
  Projection p = project({0, 0, -1}, k, Pose::identity());
  EXPECT_FALSE(p.valid);
}

TEST(Project, RoundTripRandom) {
  Rng rng(83);
  Intrinsics k{75, 75, 40, 30};
  for (int t = 0; t < 50; ++t) {
    double u = rng.uniform(0, 95), v = rng.uniform(0, 63), d = rng.uniform(0.5, 50);
    Projection p = project(backproject(u, v, d, k), k, Pose::identity());
    EXPECT_NEAR(p.u, u, 1e-9);
    EXPECT_NEAR(p.v, v, 1e-9);
    EXPECT_NEAR(p.depth, d, 1e-9);
  }
}

TEST(Pose, ComposeWithInverseIsIdentity) {
  Rng rng(89);
  for (int t = 0; t < 10; ++t) {
    Pose p = Pose::from_vectors(
        {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)},
        {rng.uniform(-500, 500), rng.uniform(-500, 500), rng.uniform(-500, 500)});
    Pose id = pose_compose(p, pose_inverse(p));
    EXPECT_NEAR(id.aa_vec().norm(), 0.0, 1e-10);
    EXPECT_NEAR(id.t_eff_vec().norm(), 0.0, 1e-10);
  }
}

Tensor constant_depth(int h, int w, double d) {
  return Tensor::full({1, 1, h, w}, d);
}

TEST(Correspondence, IdentityPoseIsIdentityMap) {
  const int h = 12, w = 16;
  Intrinsics k{20, 20, 7.5, 5.5};
  DepthMap d{constant_depth(h, w, 5.0)};
  CorrespondenceMap c = correspondence_map(d, Pose::identity(), k);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      EXPECT_NEAR(c.coords.at4(0, 0, y, x), x, 1e-9);
      EXPECT_NEAR(c.coords.at4(0, 1, y, x), y, 1e-9);
      EXPECT_DOUBLE_EQ(c.in_bounds.at4(0, 0, y, x), 1.0);
    }
}

TEST(Correspondence, PlaneUnderLateralTranslationShiftsUniformly) {
  const int h = 12, w = 16;
  const double z = 5.0, tx = 800.0, fx = 20.0;
  Intrinsics k{fx, fx, 7.5, 5.5};
  DepthMap d{constant_depth(h, w, z)};
  Pose pose = Pose::from_vectors({0, 0, 0}, {tx, 0, 0});
  CorrespondenceMap c = correspondence_map(d, pose, k);
  const double shift = fx * (Pose::kTranslationScale * tx) / z;  // closed form
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      EXPECT_NEAR(c.coords.at4(0, 0, y, x), x + shift, 1e-9);
      EXPECT_NEAR(c.coords.at4(0, 1, y, x), y, 1e-9);
    }
}

TEST(Correspondence, GradientWrtDepthMatchesFiniteDifferences) {
  const int h = 6, w = 8;
  Intrinsics k{10, 10, 3.5, 2.5};
  Pose pose = Pose::from_vectors({0.02, -0.01, 0.03}, {300, -200, 400});
  Rng rng(97);
  Tensor d0 = random_uniform({1, 1, h, w}, rng, 2.0, 6.0);
  auto rep = grad_check(
      [&](const Tensor& d) {
        return mean(correspondence_map({d}, pose, k).coords);
      },
      d0, 1e-4);
  EXPECT_LT(rep.max_rel_error, 1e-3);
}

TEST(Correspondence, GradientWrtPoseMatchesFiniteDifferences) {
  const int h = 6, w = 8;
  Intrinsics k{10, 10, 3.5, 2.5};
  Rng rng(101);
  Tensor d = random_uniform({1, 1, h, w}, rng, 2.0, 6.0);
  Tensor aa0 = Tensor::from_data({3}, {0.02, -0.01, 0.03});
  Tensor t0 = Tensor::from_data({3}, {300, -200, 400});
  auto rep_aa = grad_check(
      [&](const Tensor& aa) {
        Pose p{aa, t0};
        return mean(correspondence_map({d}, p, k).coords);
      },
      aa0, 1e-5);
  EXPECT_LT(rep_aa.max_rel_error, 1e-3);
  auto rep_t = grad_check(
      [&](const Tensor& t) {
        Pose p{aa0, t};
        return mean(correspondence_map({d}, p, k).coords);
      },
      t0, 1e-3);
  EXPECT_LT(rep_t.max_rel_error, 1e-3);
}

TEST(Correspondence, ComposesWithInverseWhenDepthTransported) {
  const int h = 10, w = 14;
  Intrinsics k{18, 18, 6.5, 4.5};
  Pose pose = Pose::from_vectors({0.01, 0.03, -0.02}, {400, 150, -300});
  Pose inv = pose_inverse(pose);
  Rng rng(103);
  Tensor d = random_uniform({1, 1, h, w}, rng, 3.0, 8.0);
  CorrespondenceMap c = correspondence_map({d}, pose, k);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (c.in_bounds.at4(0, 0, y, x) < 0.5) continue;
      const double u = c.coords.at4(0, 0, y, x);
      const double v = c.coords.at4(0, 1, y, x);
      const double dz = c.proj_depth.at4(0, 0, y, x);
      Projection back = project(backproject(u, v, dz, k), k, inv);
      ASSERT_TRUE(back.valid);
      EXPECT_NEAR(back.u, x, 1e-6);
      EXPECT_NEAR(back.v, y, 1e-6);
    }
}

TEST(Correspondence, InBoundsMatchesCoordinateRange) {
  const int h = 8, w = 10;
  Intrinsics k{12, 12, 4.5, 3.5};
  // large lateral move pushes some pixels out of frame
  Pose pose = Pose::from_vectors({0, 0, 0}, {2500, 0, 0});
  Rng rng(107);
  Tensor d = random_uniform({1, 1, h, w}, rng, 2.0, 4.0);
  CorrespondenceMap c = correspondence_map({d}, pose, k);
  bool saw_invalid = false;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = c.coords.at4(0, 0, y, x);
      const double v = c.coords.at4(0, 1, y, x);
      const double z = c.proj_depth.at4(0, 0, y, x);
      const bool expect =
          z > 0 && u >= 0 && u <= w - 1 && v >= 0 && v <= h - 1;
      EXPECT_EQ(c.in_bounds.at4(0, 0, y, x) > 0.5, expect);
      if (!expect) saw_invalid = true;
    }
  EXPECT_TRUE(saw_invalid);
}

}  // namespace
