/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <random>

#include "navkit/geometry.hpp"

namespace navkit {
namespace {

std::mt19937_64 test_rng(12345);

RigidTransform random_transform(std::mt19937_64& rng, double t_scale = 100.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
  q.normalize();
  RigidTransform t;
  t.rotation = q.toRotationMatrix();
  t.translation = Eigen::Vector3d(normal(rng), normal(rng), normal(rng)) * t_scale;
  return t;
}

// Independent oracle: 4x4 homogeneous matrix product.
Eigen::Matrix4d homogeneous(const RigidTransform& t) { return t.matrix(); }

TEST(RigidTransform, ComposeIdentity) {
  const RigidTransform id = RigidTransform::identity();
  const RigidTransform c = id * id;
  EXPECT_LT((c.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(RigidTransform, InverseLaw) {
  auto rng = test_rng;
  for (int i = 0; i < 50; ++i) {
    const RigidTransform t = random_transform(rng);
    const RigidTransform c = t * t.inverse();
    EXPECT_LT((c.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RigidTransform, ComposeAppliesRightOperandFirst) {
  // a = rot 90 deg about z plus translation (1,0,0); b = pure translation (0,1,0).
  const RigidTransform a =
      RigidTransform::from_axis_angle({0, 0, 1}, deg2rad(90.0), {1, 0, 0});
  RigidTransform b;
  b.translation = {0, 1, 0};
  const Eigen::Vector3d p = (a * b) * Eigen::Vector3d(0, 0, 0);
  // b moves the origin to (0,1,0); a rotates that to (-1,0,0) and shifts to (0,0,0).
  EXPECT_LT((p - Eigen::Vector3d(0, 0, 0)).norm(), 1e-12);

  // cross-check against the homogeneous matrix oracle
  const Eigen::Matrix4d m = homogeneous(a) * homogeneous(b);
  EXPECT_LT((m - (a * b).matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RigidTransform, ComposeMatchesMatrixOracle) {
  auto rng = test_rng;
  for (int i = 0; i < 100; ++i) {
    const RigidTransform a = random_transform(rng);
    const RigidTransform b = random_transform(rng);
    const Eigen::Matrix4d oracle = homogeneous(a) * homogeneous(b);
    EXPECT_LT((oracle - (a * b).matrix()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RigidTransform, CompositionAssociative) {
  auto rng = test_rng;
  for (int i = 0; i < 50; ++i) {
    const RigidTransform a = random_transform(rng);
    const RigidTransform b = random_transform(rng);
    const RigidTransform c = random_transform(rng);
    const Eigen::Matrix4d lhs = ((a * b) * c).matrix();
    const Eigen::Matrix4d rhs = (a * (b * c)).matrix();
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RigidTransform, TransformPoint) {
  const RigidTransform id;
  EXPECT_LT((id * Eigen::Vector3d(1, 2, 3) - Eigen::Vector3d(1, 2, 3)).norm(), 1e-15);

  RigidTransform shift;
  shift.translation = {5, 0, 0};
  EXPECT_LT((shift * Eigen::Vector3d(0, 0, 0) - Eigen::Vector3d(5, 0, 0)).norm(), 1e-15);

  const RigidTransform rx = RigidTransform::from_axis_angle({1, 0, 0}, deg2rad(180.0));
  EXPECT_LT((rx * Eigen::Vector3d(0, 1, 1) - Eigen::Vector3d(0, -1, -1)).norm(), 1e-12);
}

TEST(RigidTransform, IsometryOnRandomClouds) {
  auto rng = test_rng;
  std::normal_distribution<double> normal(0.0, 50.0);
  for (int trial = 0; trial < 10; ++trial) {
    const RigidTransform t = random_transform(rng);
    std::vector<Eigen::Vector3d> pts(40);
    for (auto& p : pts) p = {normal(rng), normal(rng), normal(rng)};
    for (size_t i = 0; i < pts.size(); ++i) {
      for (size_t j = i + 1; j < pts.size(); ++j) {
        const double before = (pts[i] - pts[j]).norm();
        const double after = (t * pts[i] - t * pts[j]).norm();
        EXPECT_NEAR(after, before, 1e-9 * std::max(1.0, before));
      }
    }
  }
}

TEST(RigidTransform, OrthonormalizedProjectsDriftAway) {
  auto rng = test_rng;
  std::uniform_real_distribution<double> uni(-1e-4, 1e-4);
  for (int i = 0; i < 20; ++i) {
    RigidTransform t = random_transform(rng);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) t.rotation(r, c) += uni(rng);
    }
    EXPECT_GT(t.orthonormality_error(), 1e-7);
    const RigidTransform fixed = t.orthonormalized();
    EXPECT_LT(fixed.orthonormality_error(), 1e-12);
    // stays close to the perturbed matrix
    EXPECT_LT((fixed.rotation - t.rotation).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(RigidTransform, OrthonormalityPreservedUnderComposition) {
  auto rng = test_rng;
  RigidTransform acc;
  for (int i = 0; i < 2000; ++i) acc = acc * random_transform(rng, 1.0);
  EXPECT_LT(acc.orthonormality_error(), 1e-7);
}

TEST(Camera, PrincipalRay) {
  CameraIntrinsics k;
  const Eigen::Vector3d p = unproject(k, k.cx, k.cy, 300.0);
  EXPECT_LT((p - Eigen::Vector3d(0, 0, 300)).norm(), 1e-12);
}

TEST(Camera, HandComputedUnprojection) {
  CameraIntrinsics k;
  k.fx = k.fy = 200.0;
  k.cx = k.cy = 256.0;
  const Eigen::Vector3d p = unproject(k, 456.0, 256.0, 200.0);
  EXPECT_LT((p - Eigen::Vector3d(200, 0, 200)).norm(), 1e-12);
}

TEST(Camera, ProjectUnprojectRoundTrip) {
  CameraIntrinsics k;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> upx(0.0, 511.0);
  std::uniform_real_distribution<double> ud(150.0, 1000.0);
  double max_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double u = upx(rng), v = upx(rng), d = ud(rng);
    const auto px = project(k, unproject(k, u, v, d));
    ASSERT_TRUE(px.has_value());
    max_err = std::max(max_err, (*px - Eigen::Vector2d(u, v)).norm());
  }
  EXPECT_LT(max_err, 1e-6);
}

TEST(Camera, BehindCameraHasNoProjection) {
  CameraIntrinsics k;
  EXPECT_FALSE(project(k, {0, 0, -10}).has_value());
  EXPECT_FALSE(project(k, {1, 2, 0}).has_value());
}

TEST(FitRigid, IdentityPairs) {
  std::vector<Eigen::Vector3d> pts = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {0, 0, 10}};
  const auto fit = fit_rigid(pts, pts);
  ASSERT_TRUE(fit.has_value());
  EXPECT_LT((fit->transform.matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(fit->rms, 1e-12);
}

TEST(FitRigid, ExactRecovery) {
  auto rng = test_rng;
  std::normal_distribution<double> normal(0.0, 40.0);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidTransform truth = random_transform(rng);
    std::vector<Eigen::Vector3d> src(6), dst(6);
    for (size_t i = 0; i < src.size(); ++i) {
      src[i] = {normal(rng), normal(rng), normal(rng)};
      dst[i] = truth * src[i];
    }
    const auto fit = fit_rigid(src, dst);
    ASSERT_TRUE(fit.has_value());
    EXPECT_LT((fit->transform.matrix() - truth.matrix()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(fit->rms, 1e-9);
  }
}

TEST(FitRigid, CollinearRejected) {
  std::vector<Eigen::Vector3d> src = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  EXPECT_FALSE(fit_rigid(src, src).has_value());
}

TEST(FitRigid, OrderInvariant) {
  auto rng = test_rng;
  std::normal_distribution<double> normal(0.0, 40.0);
  const RigidTransform truth = random_transform(rng);
  std::vector<Eigen::Vector3d> src(5), dst(5);
  for (size_t i = 0; i < src.size(); ++i) {
    src[i] = {normal(rng), normal(rng), normal(rng)};
    dst[i] = truth * src[i];
  }
  const auto a = fit_rigid(src, dst);
  std::reverse(src.begin(), src.end());
  std::reverse(dst.begin(), dst.end());
  const auto b = fit_rigid(src, dst);
  ASSERT_TRUE(a && b);
  EXPECT_LT((a->transform.matrix() - b->transform.matrix()).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace
}  // namespace navkit
