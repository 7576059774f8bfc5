/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <gtest/gtest.h>

#include "navkit/sensor_sim.hpp"

namespace navkit {
namespace {

using sim::SceneDescription;

SceneDescription plane_scene(double z_mm, double tilt_x_deg = 0.0) {
  SceneDescription scene;
  scene.head_mesh = shapes::plane_patch(800.0, 800.0, 4, 4);
  scene.head_pose = RigidTransform::from_axis_angle({1, 0, 0}, deg2rad(tilt_x_deg), {0, 0, z_mm});
  return scene;
}

CameraIntrinsics small_camera(int size = 64) {
  CameraIntrinsics k;
  k.width = k.height = size;
  k.fx = k.fy = size / 2.0;
  k.cx = k.cy = size / 2.0;
  return k;
}

TEST(RenderFrame, FrontoParallelPlaneDepthExact) {
  const SceneDescription scene = plane_scene(300.0);
  const CameraIntrinsics k = small_camera(128);
  const DepthFrame frame = sim::render_frame(scene, RigidTransform::identity(), k, 0);
  size_t valid = 0;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const float d = frame.depth_at(u, v);
      if (!depth_valid(d)) continue;
      valid++;
      EXPECT_NEAR(d, 300.0, 1e-2);  // camera-frame z of the analytic hit
    }
  }
  EXPECT_GT(valid, size_t(k.width) * k.height / 2);
}

TEST(RenderFrame, ConstantOffsetDistortion) {
  SceneDescription scene = plane_scene(300.0);
  scene.head_material.distortion = {5.0, 0.0, 0.0};
  const CameraIntrinsics k = small_camera(64);
  const DepthFrame frame = sim::render_frame(scene, RigidTransform::identity(), k, 0);
  // at normal incidence the measured depth is true + 5.000 mm
  EXPECT_NEAR(frame.depth_at(32, 32), 305.0, 1e-3);
}

TEST(RenderFrame, SphereCenterPixelDepth) {
  SceneDescription scene;
  scene.head_mesh = shapes::icosphere(50.0, 5);
  scene.head_pose.translation = {0, 0, 300};
  const CameraIntrinsics k = small_camera(64);
  const DepthFrame frame = sim::render_frame(scene, RigidTransform::identity(), k, 0);
  // analytic ray-sphere oracle: center ray hits at z = 300 - 50
  EXPECT_NEAR(frame.depth_at(32, 32), 250.0, 0.05);
}

TEST(RenderFrame, Deterministic) {
  SceneDescription scene = plane_scene(300.0, 20.0);
  scene.head_material.depth_noise_sigma = 1.0;
  const CameraIntrinsics k = small_camera(64);
  const DepthFrame a = sim::render_frame(scene, RigidTransform::identity(), k, 42);
  const DepthFrame b = sim::render_frame(scene, RigidTransform::identity(), k, 42);
  ASSERT_EQ(a.depth.size(), b.depth.size());
  EXPECT_TRUE(std::equal(a.depth.begin(), a.depth.end(), b.depth.begin()));
  EXPECT_TRUE(std::equal(a.ir.begin(), a.ir.end(), b.ir.begin()));
  const DepthFrame c = sim::render_frame(scene, RigidTransform::identity(), k, 43);
  EXPECT_FALSE(std::equal(a.depth.begin(), a.depth.end(), c.depth.begin()));
}

TEST(RenderFrame, EmptySceneAllInvalid) {
  SceneDescription scene;
  const CameraIntrinsics k = small_camera(32);
  const DepthFrame frame = sim::render_frame(scene, RigidTransform::identity(), k, 0);
  EXPECT_EQ(frame.valid_count(), 0u);
}

TEST(RenderSequence, EmptyTrajectory) {
  const SceneDescription scene = plane_scene(300.0);
  EXPECT_TRUE(sim::render_sequence(scene, {}, small_camera(), 0).empty());
}

TEST(RenderSequence, StaticMeanConvergesToDistortedTruth) {
  SceneDescription scene = plane_scene(300.0);
  scene.head_material.depth_noise_sigma = 1.0;
  const CameraIntrinsics k = small_camera(48);
  const size_t n = 300;
  const auto frames = sim::render_static_sequence(scene, RigidTransform::identity(), k, n, 5);
  ASSERT_EQ(frames.size(), n);

  const DepthFrame truth = [&] {
    SceneDescription clean = scene;
    clean.head_material.depth_noise_sigma = 0.0;
    return sim::render_frame(clean, RigidTransform::identity(), k, 0);
  }();

  const double bound = 3.0 * 1.0 / std::sqrt(double(n));
  size_t checked = 0, within = 0;
  for (size_t i = 0; i < truth.depth.size(); ++i) {
    if (!depth_valid(truth.depth[i])) continue;
    double sum = 0.0;
    size_t cnt = 0;
    for (const auto& f : frames) {
      if (depth_valid(f.frame.depth[i])) {
        sum += f.frame.depth[i];
        cnt++;
      }
    }
    if (cnt == 0) continue;
    checked++;
    if (std::abs(sum / cnt - truth.depth[i]) <= bound) within++;
  }
  ASSERT_GT(checked, 500u);
  // 3 sigma bound holds for ~99.7% of pixels
  EXPECT_GT(double(within) / double(checked), 0.99);
}

TEST(RenderSequence, StaticStackMatchesRepeatedPose) {
  SceneDescription scene = plane_scene(320.0, 10.0);
  scene.head_material.depth_noise_sigma = 0.7;
  const CameraIntrinsics k = small_camera(32);
  const RigidTransform pose = RigidTransform::identity();
  const auto quick = sim::render_static_sequence(scene, pose, k, 4, 11);
  const auto slow = sim::render_sequence(scene, {pose, pose, pose, pose}, k, 11);
  ASSERT_EQ(quick.size(), slow.size());
  for (size_t i = 0; i < quick.size(); ++i) {
    EXPECT_TRUE(std::equal(quick[i].frame.depth.begin(), quick[i].frame.depth.end(),
                           slow[i].frame.depth.begin()));
  }
}

TEST(RenderSequence, OrbitVisibility) {
  SceneDescription scene;
  scene.head_mesh = shapes::head(180.0, 4);
  CameraIntrinsics k;
  k.width = k.height = 128;
  k.fx = k.fy = 220.0;  // narrow FoV so the head fills the image
  k.cx = k.cy = 64.0;
  const auto orbit = sim::orbit_trajectory({0, 0, 0}, 400.0, 10);
  const auto frames = sim::render_sequence(scene, orbit, k, 0);
  ASSERT_EQ(frames.size(), 10u);
  for (const auto& f : frames) {
    EXPECT_GE(double(f.frame.valid_count()) / double(k.width * k.height), 0.30);
  }
}

TEST(RenderFrame, InjectedDistortionExactlyRecoverable) {
  // tilted plane: estimated normals are exact, so matched-parameter correction
  // must restore the true depth to ray-cast precision
  SceneDescription scene = plane_scene(300.0, 25.0);
  scene.head_material.distortion = {7.0, 0.01, 3.0};
  const CameraIntrinsics k = small_camera(96);
  const DepthFrame measured = sim::render_frame(scene, RigidTransform::identity(), k, 0);

  SceneDescription clean = scene;
  clean.head_material.distortion = {};
  const DepthFrame truth = sim::render_frame(clean, RigidTransform::identity(), k, 0);

  const DepthFrame corrected = correct_depth(measured, scene.head_material.distortion);
  std::vector<double> residuals;
  for (int v = 4; v < k.height - 4; ++v) {
    for (int u = 4; u < k.width - 4; ++u) {
      if (!depth_valid(corrected.depth_at(u, v)) || !depth_valid(truth.depth_at(u, v))) continue;
      residuals.push_back(std::abs(corrected.depth_at(u, v) - truth.depth_at(u, v)));
    }
  }
  ASSERT_GT(residuals.size(), 1000u);
  EXPECT_LT(median_iqr(residuals).median, 0.01);
}

TEST(RenderFrame, RetroMarkersSeparableFromSkin) {
  SceneDescription scene;
  scene.head_mesh = shapes::head(180.0, 4);
  scene.head_pose = RigidTransform::from_axis_angle({0, 1, 0}, deg2rad(180.0), {0, 0, 350});
  scene.head_material.ir_reflectivity = 900.0;
  scene.retro_material.ir_reflectivity = 30000.0;
  scene.ambient_ir = 0.0;

  // forehead = head-frame +z (face side), which the 180-degree pose turns
  // toward the camera
  const TriangleBvh bvh(scene.head_mesh);
  for (const Eigen::Vector3d& dir :
       {Eigen::Vector3d(0.15, 0.3, 1), Eigen::Vector3d(-0.15, 0.3, 1),
        Eigen::Vector3d(0.3, 0.45, 1), Eigen::Vector3d(-0.3, 0.45, 1)}) {
    const auto m = sim::place_disc_on_mesh(scene.head_mesh, bvh, dir.normalized(), 10.0);
    ASSERT_TRUE(m.has_value());
    scene.skin_markers.push_back(*m);
  }

  const CameraIntrinsics k = small_camera(256);
  const RigidTransform pose = sim::look_at({0, 0, 0}, {0, 0, 350});
  const DepthFrame frame = sim::render_frame(scene, pose, k, 0);

  // classify pixels by casting the same rays against the marker discs;
  // a band around each rim is left unclassified (pixel centers there may
  // legitimately sample either side)
  uint16_t min_marker_ir = 65535, max_skin_ir = 0;
  const RigidTransform cam_to_world = pose;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      if (!depth_valid(frame.depth_at(u, v))) continue;
      const Eigen::Vector3d dir = cam_to_world.rotate(pixel_ray(k, u, v).normalized());
      bool on_marker = false, near_rim = false;
      for (const auto& m : scene.skin_markers) {
        const Eigen::Vector3d c = scene.head_pose * m.center;
        const Eigen::Vector3d n = scene.head_pose.rotate(m.normal);
        const double denom = dir.dot(n);
        if (std::abs(denom) < 1e-12) continue;
        const double t = (c - cam_to_world.translation).dot(n) / denom;
        if (t <= 0) continue;
        const double rim = (cam_to_world.translation + t * dir - c).norm();
        if (rim < m.diameter_mm / 2.0 - 1.5) on_marker = true;
        else if (rim < m.diameter_mm / 2.0 + 1.5) near_rim = true;
      }
      if (on_marker) min_marker_ir = std::min(min_marker_ir, frame.ir_at(u, v));
      else if (!near_rim) max_skin_ir = std::max(max_skin_ir, frame.ir_at(u, v));
    }
  }
  EXPECT_GT(min_marker_ir, max_skin_ir);
  EXPECT_GT(max_skin_ir, 0);
}

TEST(TrueSurfaceSamples, SphereAndRegion) {
  SceneDescription scene;
  scene.head_mesh = shapes::icosphere(50.0, 5);
  scene.head_pose.translation = {10, 20, 30};
  const PointCloud samples = sim::true_surface_samples(scene);
  ASSERT_GT(samples.size(), 100u);
  for (const auto& p : samples.points) {
    EXPECT_NEAR((p - Eigen::Vector3d(10, 20, 30)).norm(), 50.0, 0.05);
  }

  Aabb region;
  region.lo = {10, 20, 30};
  region.hi = {100, 100, 100};
  const PointCloud octant = sim::true_surface_samples(scene, region);
  EXPECT_LT(octant.size(), samples.size() / 4);
  for (const auto& p : octant.points) {
    EXPECT_GE(p.x(), 10.0);
    EXPECT_GE(p.y(), 20.0);
    EXPECT_GE(p.z(), 30.0);
  }
}

TEST(HashGaussian, UnitMoments) {
  double sum = 0.0, sumsq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = sim::hash_gaussian(123, uint64_t(i));
    sum += x;
    sumsq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sumsq / n, 1.0, 0.02);
}

}  // namespace
}  // namespace navkit
