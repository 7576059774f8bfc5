/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include <random>

#include "navkit/distortion.hpp"
#include "navkit/sensor_sim.hpp"
#include "navkit/shapes.hpp"

namespace navkit {
namespace {

CameraIntrinsics small_camera(int size = 64) {
  CameraIntrinsics k;
  k.width = k.height = size;
  k.fx = k.fy = size / 2.0;
  k.cx = k.cy = size / 2.0;
  return k;
}

DepthFrame plane_frame(double z_mm, double tilt_x_deg, int size = 64) {
  sim::SceneDescription scene;
  scene.head_mesh = shapes::plane_patch(2000.0, 2000.0, 4, 4);
  scene.head_pose =
      RigidTransform::from_axis_angle({1, 0, 0}, deg2rad(tilt_x_deg), {0, 0, z_mm});
  return sim::render_frame(scene, RigidTransform::identity(), small_camera(size), 0);
}

TEST(EstimateNormals, FrontoParallelPlane) {
  const DepthFrame frame = plane_frame(300.0, 0.0);
  const NormalGrid grid = estimate_normals(frame);
  size_t checked = 0;
  for (int v = 0; v < frame.height(); ++v) {
    for (int u = 0; u < frame.width(); ++u) {
      if (!grid.valid_at(u, v)) continue;
      checked++;
      EXPECT_LT((grid.normal_at(u, v) - Eigen::Vector3d(0, 0, -1)).norm(), 1e-3);
    }
  }
  EXPECT_GT(checked, size_t(frame.width()) * frame.height() * 3 / 4);
}

TEST(EstimateNormals, TiltedPlane) {
  const DepthFrame frame = plane_frame(300.0, 45.0);
  const NormalGrid grid = estimate_normals(frame);
  const Eigen::Vector3d expected =
      RigidTransform::from_axis_angle({1, 0, 0}, deg2rad(45.0)).rotate({0, 0, -1});
  size_t checked = 0;
  for (int v = 2; v < frame.height() - 2; ++v) {
    for (int u = 2; u < frame.width() - 2; ++u) {
      if (!grid.valid_at(u, v)) continue;
      checked++;
      const double angle =
          rad2deg(std::acos(std::clamp(grid.normal_at(u, v).dot(expected), -1.0, 1.0)));
      EXPECT_LT(angle, 0.5);
    }
  }
  EXPECT_GT(checked, 100u);
}

TEST(EstimateNormals, IsolatedPixelInvalid) {
  DepthFrame frame(small_camera(32));
  frame.depth_at(16, 16) = 300.0f;
  const NormalGrid grid = estimate_normals(frame);
  EXPECT_FALSE(grid.valid_at(16, 16));
}

TEST(CorrectDepth, ZeroParamsIsIdentity) {
  const DepthFrame frame = plane_frame(300.0, 30.0);
  const DepthFrame out = correct_depth(frame, DistortionParams{});
  EXPECT_TRUE(std::equal(frame.depth.begin(), frame.depth.end(), out.depth.begin()));
  EXPECT_TRUE(std::equal(frame.ir.begin(), frame.ir.end(), out.ir.begin()));
}

TEST(CorrectDepth, ConstantOffset) {
  DepthFrame frame(small_camera(32));
  for (auto& d : frame.depth) d = 300.0f;
  const DepthFrame out = correct_depth(frame, DistortionParams{5.0, 0.0, 0.0});
  for (float d : out.depth) EXPECT_NEAR(d, 295.0, 1e-4);
}

TEST(CorrectDepth, FormulaByHand) {
  // d = 300, theta = 0: corrected = 300 - (2 + 0.01*300) = 295
  DepthFrame frame(small_camera(32));
  for (auto& d : frame.depth) d = 300.0f;
  const DepthFrame out = correct_depth(frame, DistortionParams{2.0, 0.01, 0.0});
  // c3 = 0 makes the normal term irrelevant regardless of estimated theta
  EXPECT_NEAR(out.depth_at(16, 16), 295.0, 1e-4);
}

TEST(CorrectDepth, AffineInC1) {
  const DepthFrame frame = plane_frame(320.0, 20.0);
  const DepthFrame a = correct_depth(frame, DistortionParams{1.0, 0.005, 2.0});
  const DepthFrame b = correct_depth(frame, DistortionParams{4.0, 0.005, 2.0});
  for (size_t i = 0; i < frame.depth.size(); ++i) {
    if (!depth_valid(a.depth[i]) || !depth_valid(b.depth[i])) continue;
    EXPECT_NEAR(a.depth[i] - b.depth[i], 3.0, 1e-3);
  }
}

TEST(CorrectDepth, OutOfRangeBecomesInvalid) {
  DepthFrame frame(small_camera(16));
  for (auto& d : frame.depth) d = 152.0f;
  const DepthFrame out = correct_depth(frame, DistortionParams{10.0, 0.0, 0.0});
  for (float d : out.depth) EXPECT_EQ(d, 0.0f);
}

TEST(CorrectMarkerCenter, ZeroParamsUnchanged) {
  const Eigen::Vector3d c(10, -20, 400);
  const Eigen::Vector3d out = correct_marker_center(c, c.normalized(), DistortionParams{}, 1.0);
  EXPECT_LT((out - c).norm(), 1e-12);
}

TEST(CorrectMarkerCenter, PrincipalRayOffset) {
  const Eigen::Vector3d c(0, 0, 400);
  const Eigen::Vector3d out =
      correct_marker_center(c, {0, 0, 1}, DistortionParams{3.0, 0.0, 0.0}, 1.0);
  EXPECT_LT((out - Eigen::Vector3d(0, 0, 397)).norm(), 1e-12);
}

TEST(CorrectMarkerCenter, ShiftIsAlongRayOnly) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Eigen::Vector3d c(normal(rng) * 100, normal(rng) * 100, 300 + std::abs(normal(rng)) * 300);
    const Eigen::Vector3d ray = c.normalized();
    const Eigen::Vector3d out =
        correct_marker_center(c, ray, DistortionParams{5.0, 0.01, 4.0}, 0.8);
    const Eigen::Vector3d shift = out - c;
    EXPECT_LT(shift.cross(ray).norm(), 1e-9);
  }
}

TEST(DepthErrorStats, PointsOnSurface) {
  const TriangleMesh plane = shapes::plane_patch(100.0, 100.0);
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {10, 10, 0}, {-20, 5, 0}};
  const auto stats = depth_error_stats(cloud, plane);
  EXPECT_NEAR(stats.median, 0.0, 1e-12);
  EXPECT_NEAR(stats.iqr, 0.0, 1e-12);
}

TEST(DepthErrorStats, OrderStatisticsDefinition) {
  const TriangleMesh plane = shapes::plane_patch(100.0, 100.0);
  PointCloud cloud;
  for (double h : {1.0, 2.0, 3.0, 4.0, 5.0}) cloud.points.push_back({0, 0, h});
  const auto stats = depth_error_stats(cloud, plane);
  EXPECT_NEAR(stats.median, 3.0, 1e-12);
  EXPECT_NEAR(stats.iqr, 2.0, 1e-12);
}

TEST(DepthErrorStats, EmptyThrows) {
  const TriangleMesh plane = shapes::plane_patch(10.0, 10.0);
  EXPECT_THROW(depth_error_stats(PointCloud{}, plane), std::invalid_argument);
}

TEST(DepthErrorStats, CloudTruthVariant) {
  PointCloud truth;
  truth.points = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}};
  PointCloud measured;
  measured.points = {{0, 0, 2}, {10, 0, 1}};
  const auto stats = depth_error_stats(measured, truth);
  EXPECT_NEAR(stats.median, 1.5, 1e-12);
}

// Matched-model recovery on a curved surface with noise: median residual at
// or below the noise floor.
TEST(Distortion, RoundTripOnHeadSceneWithNoise) {
  sim::SceneDescription scene;
  scene.head_mesh = shapes::head(180.0, 4);
  scene.head_pose = RigidTransform::from_axis_angle({0, 1, 0}, deg2rad(180.0), {0, 0, 400});
  scene.head_material.distortion = {7.5, 0.002, 1.5};
  scene.head_material.depth_noise_sigma = 0.5;

  CameraIntrinsics k = small_camera(128);
  k.fx = k.fy = 220.0;  // narrow FoV so the head covers enough pixels
  const DepthFrame measured = sim::render_frame(scene, RigidTransform::identity(), k, 3);
  const DepthFrame corrected = correct_depth(measured, scene.head_material.distortion);

  sim::SceneDescription clean = scene;
  clean.head_material.distortion = {};
  clean.head_material.depth_noise_sigma = 0.0;
  const DepthFrame truth = sim::render_frame(clean, RigidTransform::identity(), k, 0);

  std::vector<double> before, after;
  for (size_t i = 0; i < truth.depth.size(); ++i) {
    if (!depth_valid(truth.depth[i])) continue;
    if (depth_valid(measured.depth[i])) before.push_back(std::abs(measured.depth[i] - truth.depth[i]));
    if (depth_valid(corrected.depth[i])) after.push_back(std::abs(corrected.depth[i] - truth.depth[i]));
  }
  ASSERT_GT(after.size(), 1000u);
  const double median_before = median_iqr(before).median;
  const double median_after = median_iqr(after).median;
  EXPECT_GT(median_before, 7.0);
  EXPECT_LE(median_after, 0.5);
}

TEST(Stats, MedianIqrBasics) {
  EXPECT_NEAR(median_iqr({1, 2, 3, 4, 5}).median, 3.0, 1e-12);
  EXPECT_NEAR(median_iqr({1, 2, 3, 4, 5}).iqr, 2.0, 1e-12);
  EXPECT_NEAR(median_iqr({7.5}).median, 7.5, 1e-12);
  EXPECT_NEAR(median_iqr({7.5}).iqr, 0.0, 1e-12);
  EXPECT_THROW(median_iqr({}), std::invalid_argument);
}

}  // namespace
}  // namespace navkit
