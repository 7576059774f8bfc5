/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "navkit/bvh.hpp"
#include "navkit/distortion.hpp"
#include "navkit/frame.hpp"
#include "navkit/shapes.hpp"
#include "navkit/tracking.hpp"

namespace navkit::sim {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index + 0x9e3779b97f4a7c15ULL));
}

/// Deterministic per-pixel unit gaussian, independent of thread count.
inline double hash_gaussian(uint64_t seed, uint64_t pixel) {
  const uint64_t a = splitmix64(seed ^ splitmix64(pixel));
  const uint64_t b = splitmix64(a);
  const double u1 = (double((a >> 11) + 1)) * (1.0 / 9007199254740993.0);  // (0, 1)
  const double u2 = double(b >> 11) * (1.0 / 9007199254740992.0);          // [0, 1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

/// Optical surface behavior of one scene material. The distortion entry is
/// injected into rendered depth; `quad_mm` adds an uncorrected quadratic depth
/// term for model-mismatch stress scenarios.
struct MaterialProfile {
  std::string name = "default";
  DistortionParams distortion;
  double quad_mm = 0.0;
  double ir_reflectivity = 800.0;   // counts at normal incidence
  double depth_noise_sigma = 0.0;   // mm
};

/// Flat circular retro-reflective marker.
struct DiscMarker {
  Eigen::Vector3d center;  // owning frame, mm
  Eigen::Vector3d normal;  // unit
  double diameter_mm = 10.0;
};

/// Camera-to-world pose looking from `eye` toward `target`. Camera axes:
/// +z forward, +x right, +y down (image convention).
inline RigidTransform look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                              const Eigen::Vector3d& up_hint = {0, 1, 0}) {
  const Eigen::Vector3d fwd = (target - eye).normalized();
  Eigen::Vector3d right = fwd.cross(up_hint);
  if (right.norm() < 1e-9) right = fwd.cross(Eigen::Vector3d(1, 0, 0));
  right.normalize();
  const Eigen::Vector3d down = fwd.cross(right);  // +y down with +x right, +z fwd
  RigidTransform pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = fwd;
  pose.translation = eye;
  return pose;
}

/// Synthetic surgical scene: head mesh, its material, an optional tracked tool
/// with planar retro markers, retro discs stuck on the head skin, ambient IR.
struct SceneDescription {
  TriangleMesh head_mesh;          // head/image frame
  RigidTransform head_pose;        // head frame -> world
  MaterialProfile head_material;

  std::optional<ToolDefinition> tool;
  RigidTransform tool_pose;                          // tool frame -> world
  std::vector<Eigen::Vector3d> tool_marker_normals;  // tool frame; defaults to +z
  MaterialProfile retro_material{
      .name = "retro", .ir_reflectivity = 30000.0};

  std::vector<DiscMarker> skin_markers;  // head frame
  double ambient_ir = 0.0;

  /// Ground truth for the registration chain: head/image frame -> tool frame.
  RigidTransform true_image_to_tool() const { return tool_pose.inverse() * head_pose; }

  Eigen::Vector3d tool_marker_normal(size_t i) const {
    if (i < tool_marker_normals.size()) return tool_marker_normals[i];
    return {0, 0, 1};
  }
};

/// Place a flat marker on the mesh surface: cast from `direction` (unit,
/// head-frame) toward the origin and drop the disc at the first hit, oriented
/// along the outward surface normal. The disc sits `lift_mm` above the
/// surface, like a physical sticker, so it occludes the skin underneath
/// instead of z-fighting with it.
inline std::optional<DiscMarker> place_disc_on_mesh(const TriangleMesh& mesh,
                                                    const TriangleBvh& bvh,
                                                    const Eigen::Vector3d& direction,
                                                    double diameter_mm = 10.0,
                                                    double lift_mm = 0.5) {
  const Eigen::Vector3d dir = direction.normalized();
  const Eigen::Vector3d origin = dir * 1e4;
  const auto hit = bvh.raycast(origin, -dir);
  if (!hit) return std::nullopt;
  DiscMarker m;
  m.normal = hit->normal.dot(dir) > 0 ? hit->normal : Eigen::Vector3d(-hit->normal);
  m.center = origin - dir * hit->t + m.normal * lift_mm;
  m.diameter_mm = diameter_mm;
  return m;
}

namespace detail {

struct WorldDisc {
  Eigen::Vector3d center;
  Eigen::Vector3d normal;
  double radius = 0.0;
};

struct GeometryBuffer {
  CameraIntrinsics intrinsics;
  std::vector<float> depth;  // distorted, pre-noise; 0 = miss
  std::vector<float> sigma;  // per-pixel material noise
  std::vector<uint16_t> ir;
};

inline std::optional<double> intersect_disc(const WorldDisc& disc, const Eigen::Vector3d& org,
                                            const Eigen::Vector3d& dir) {
  const double denom = dir.dot(disc.normal);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double t = (disc.center - org).dot(disc.normal) / denom;
  if (t <= 1e-6) return std::nullopt;
  if ((org + t * dir - disc.center).squaredNorm() > disc.radius * disc.radius)
    return std::nullopt;
  return t;
}

/// Measured depth for a surface at true camera-frame depth z with incidence
/// cos. The injected map is the exact inverse of the correction formula so a
/// matched-parameter correction recovers the true depth (up to quad_mm).
inline double inject_distortion(double z_true, double incidence_cos, const MaterialProfile& mat) {
  const double numer = z_true + mat.distortion.c1 + mat.distortion.c3 * (1.0 - incidence_cos) +
                       mat.quad_mm * (z_true / 1000.0) * (z_true / 1000.0);
  return numer / (1.0 - mat.distortion.c2);
}

inline GeometryBuffer geometry_pass(const SceneDescription& scene,
                                    const RigidTransform& sensor_pose,
                                    const CameraIntrinsics& intrinsics) {
  GeometryBuffer buf;
  buf.intrinsics = intrinsics;
  const size_t n = size_t(intrinsics.width) * size_t(intrinsics.height);
  buf.depth.assign(n, 0.0f);
  buf.sigma.assign(n, 0.0f);
  buf.ir.assign(n, uint16_t(std::clamp(scene.ambient_ir, 0.0, 65535.0)));

  const TriangleMesh world_mesh = scene.head_mesh.transformed(scene.head_pose);
  const TriangleBvh bvh(world_mesh);

  std::vector<WorldDisc> discs;
  for (const auto& m : scene.skin_markers) {
    discs.push_back({scene.head_pose * m.center, scene.head_pose.rotate(m.normal),
                     m.diameter_mm / 2.0});
  }
  if (scene.tool) {
    for (size_t i = 0; i < scene.tool->marker_positions.size(); ++i) {
      discs.push_back({scene.tool_pose * scene.tool->marker_positions[i],
                       scene.tool_pose.rotate(scene.tool_marker_normal(i)).normalized(),
                       scene.tool->marker_diameter_mm / 2.0});
    }
  }

  const Eigen::Vector3d org = sensor_pose.translation;
  const RigidTransform world_to_cam = sensor_pose.inverse();

#pragma omp parallel for schedule(dynamic, 8)
  for (int v = 0; v < intrinsics.height; ++v) {
    for (int u = 0; u < intrinsics.width; ++u) {
      const Eigen::Vector3d dir_cam = pixel_ray(intrinsics, u, v).normalized();
      const Eigen::Vector3d dir = sensor_pose.rotate(dir_cam);

      double mesh_t = std::numeric_limits<double>::infinity();
      Eigen::Vector3d mesh_normal = Eigen::Vector3d::Zero();
      if (!bvh.empty()) {
        if (const auto hit = bvh.raycast(org, dir)) {
          mesh_t = hit->t;
          mesh_normal = hit->normal;
        }
      }

      // Discs are supersampled: a pixel integrates irradiance over its
      // footprint, so rim pixels carry the covered fraction of the retro
      // signal. Coverage decides whether the pixel's depth samples the disc
      // (>= half covered) or the surface behind it.
      double disc_t = std::numeric_limits<double>::infinity();
      Eigen::Vector3d disc_normal = Eigen::Vector3d::Zero();
      double disc_coverage = 0.0;
      constexpr int kSub = 4;
      for (const auto& disc : discs) {
        const double denom = dir.dot(disc.normal);
        if (std::abs(denom) < 1e-12) continue;
        const double t = (disc.center - org).dot(disc.normal) / denom;
        if (t <= 1e-6 || t >= disc_t || t >= mesh_t + disc.radius) continue;
        const double rim_dist = (org + t * dir - disc.center).norm();
        const double footprint = t / std::max(intrinsics.fx, intrinsics.fy);
        if (rim_dist > disc.radius + footprint) continue;
        int covered = 0;
        for (int sv = 0; sv < kSub; ++sv) {
          for (int su = 0; su < kSub; ++su) {
            const Eigen::Vector3d sub_dir = sensor_pose.rotate(
                pixel_ray(intrinsics, u + (su + 0.5) / kSub - 0.5, v + (sv + 0.5) / kSub - 0.5)
                    .normalized());
            const double sd = sub_dir.dot(disc.normal);
            if (std::abs(sd) < 1e-12) continue;
            const double st = (disc.center - org).dot(disc.normal) / sd;
            if (st > 1e-6 && (org + st * sub_dir - disc.center).norm() <= disc.radius) covered++;
          }
        }
        if (covered == 0) continue;
        disc_t = t;
        disc_normal = disc.normal.dot(dir) > 0 ? Eigen::Vector3d(-disc.normal) : disc.normal;
        disc_coverage = double(covered) / double(kSub * kSub);
      }

      const bool disc_in_front = disc_t < mesh_t;
      double ir = scene.ambient_ir;
      if (disc_in_front) {
        const double cos_d = std::clamp(-disc_normal.dot(dir), 0.0, 1.0);
        ir += scene.retro_material.ir_reflectivity * cos_d * disc_coverage;
      }

      double surf_t;
      Eigen::Vector3d normal;
      const MaterialProfile* mat;
      if (disc_in_front && disc_coverage >= 0.5) {
        surf_t = disc_t;
        normal = disc_normal;
        mat = &scene.retro_material;
      } else if (std::isfinite(mesh_t)) {
        surf_t = mesh_t;
        normal = mesh_normal;
        mat = &scene.head_material;
        const double cos_m = std::clamp(-mesh_normal.dot(dir), 0.0, 1.0);
        ir += scene.head_material.ir_reflectivity * cos_m *
              (disc_in_front ? 1.0 - disc_coverage : 1.0);
      } else {
        const size_t idx = size_t(v) * intrinsics.width + u;
        buf.ir[idx] = uint16_t(std::clamp(ir, 0.0, 65535.0));
        continue;
      }

      const Eigen::Vector3d p_cam = world_to_cam * (org + surf_t * dir);
      const double z_true = p_cam.z();
      if (z_true <= 0.0) continue;
      const double cos_t = std::clamp(-normal.dot(dir), 0.0, 1.0);

      const size_t idx = size_t(v) * intrinsics.width + u;
      buf.depth[idx] = float(inject_distortion(z_true, cos_t, *mat));
      buf.sigma[idx] = float(mat->depth_noise_sigma);
      buf.ir[idx] = uint16_t(std::clamp(ir, 0.0, 65535.0));
    }
  }
  return buf;
}

inline DepthFrame apply_noise(const GeometryBuffer& buf, uint64_t frame_seed,
                              uint64_t timestamp_us) {
  DepthFrame frame(buf.intrinsics);
  frame.timestamp_us = timestamp_us;
  frame.ir = buf.ir;
  const size_t n = buf.depth.size();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(n); ++i) {
    const float z = buf.depth[i];
    if (z == 0.0f) continue;
    double measured = z;
    if (buf.sigma[i] > 0.0f) measured += buf.sigma[i] * hash_gaussian(frame_seed, uint64_t(i));
    frame.depth[i] = depth_valid(float(measured)) ? float(measured) : 0.0f;
  }
  return frame;
}

}  // namespace detail

/// Render one frame: cast a ray per pixel, record the injected-distortion
/// depth of the nearest hit plus seeded gaussian noise, and IR reflectivity
/// with Lambertian falloff. Missing pixels stay invalid (depth 0).
inline DepthFrame render_frame(const SceneDescription& scene, const RigidTransform& sensor_pose,
                               const CameraIntrinsics& intrinsics, uint64_t noise_seed,
                               uint64_t timestamp_us = 0) {
  return detail::apply_noise(detail::geometry_pass(scene, sensor_pose, intrinsics), noise_seed,
                             timestamp_us);
}

struct PosedFrame {
  DepthFrame frame;
  RigidTransform sensor_pose;  // camera -> world, ground truth
};

/// Render a trajectory; frame i uses the seed derived from (seed, i) and a
/// 30 Hz timestamp, so results are reproducible frame by frame.
inline std::vector<PosedFrame> render_sequence(const SceneDescription& scene,
                                               const std::vector<RigidTransform>& trajectory,
                                               const CameraIntrinsics& intrinsics,
                                               uint64_t seed) {
  std::vector<PosedFrame> out;
  out.reserve(trajectory.size());
  for (size_t i = 0; i < trajectory.size(); ++i) {
    out.push_back({render_frame(scene, trajectory[i], intrinsics, derive_seed(seed, i),
                                uint64_t(i) * 33333ULL),
                   trajectory[i]});
  }
  return out;
}

/// Static capture: same pose repeated `count` times. Equivalent to
/// render_sequence with a repeated pose but casts rays only once; frames
/// differ only by their per-frame noise.
inline std::vector<PosedFrame> render_static_sequence(const SceneDescription& scene,
                                                      const RigidTransform& sensor_pose,
                                                      const CameraIntrinsics& intrinsics,
                                                      size_t count, uint64_t seed) {
  const auto geom = detail::geometry_pass(scene, sensor_pose, intrinsics);
  std::vector<PosedFrame> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    out.push_back({detail::apply_noise(geom, derive_seed(seed, i), uint64_t(i) * 33333ULL),
                   sensor_pose});
  }
  return out;
}

/// Uniform ground-truth samples of the head surface (world frame), optionally
/// limited to an axis-aligned region. Stands in for the CT scan.
inline PointCloud true_surface_samples(const SceneDescription& scene,
                                       const std::optional<Aabb>& region = std::nullopt,
                                       double density_per_cm2 = 10.0, uint64_t seed = 7) {
  PointCloud samples = shapes::sample_surface(scene.head_mesh, density_per_cm2, seed);
  PointCloud out;
  out.points.reserve(samples.size());
  out.normals.reserve(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const Eigen::Vector3d p = scene.head_pose * samples.points[i];
    if (region) {
      if ((p.array() < region->lo.array()).any() || (p.array() > region->hi.array()).any())
        continue;
    }
    out.points.push_back(p);
    out.normals.push_back(scene.head_pose.rotate(samples.normals[i]));
  }
  return out;
}

/// Circular orbit of `count` poses at `radius` around `center`, looking at the
/// center. The orbit plane normal is `axis`.
inline std::vector<RigidTransform> orbit_trajectory(const Eigen::Vector3d& center, double radius,
                                                    size_t count,
                                                    const Eigen::Vector3d& axis = {0, 1, 0},
                                                    double elevation_deg = 15.0) {
  std::vector<RigidTransform> poses;
  poses.reserve(count);
  const Eigen::Vector3d up = axis.normalized();
  Eigen::Vector3d ref = std::abs(up.z()) < 0.9 ? Eigen::Vector3d(0, 0, 1)
                                               : Eigen::Vector3d(1, 0, 0);
  const Eigen::Vector3d e1 = up.cross(ref).normalized();
  const Eigen::Vector3d e2 = up.cross(e1);
  const double elev = deg2rad(elevation_deg);
  for (size_t i = 0; i < count; ++i) {
    const double a = 2.0 * kPi * double(i) / double(count);
    const Eigen::Vector3d eye = center + radius * std::cos(elev) * (std::cos(a) * e1 +
                                                                    std::sin(a) * e2) +
                                radius * std::sin(elev) * up;
    poses.push_back(look_at(eye, center, up));
  }
  return poses;
}

/// Random viewpoints on a cone of directions around `view_axis` (pointing
/// from the scene toward the sensor), at distances in [near, far], looking at
/// `center` with a small target jitter. Models hand-held capture at random
/// poses.
inline std::vector<RigidTransform> random_pose_trajectory(
    const Eigen::Vector3d& center, const Eigen::Vector3d& view_axis, size_t count,
    double near_mm, double far_mm, uint64_t seed, double max_cone_deg = 45.0,
    double target_jitter_mm = 15.0) {
  std::vector<RigidTransform> poses;
  poses.reserve(count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const Eigen::Vector3d axis = view_axis.normalized();
  Eigen::Vector3d ref = std::abs(axis.z()) < 0.9 ? Eigen::Vector3d(0, 0, 1)
                                                 : Eigen::Vector3d(1, 0, 0);
  const Eigen::Vector3d e1 = axis.cross(ref).normalized();
  const Eigen::Vector3d e2 = axis.cross(e1);
  const double cos_max = std::cos(deg2rad(max_cone_deg));

  for (size_t i = 0; i < count; ++i) {
    const double cos_a = 1.0 - uni(rng) * (1.0 - cos_max);
    const double sin_a = std::sqrt(std::max(0.0, 1.0 - cos_a * cos_a));
    const double phi = 2.0 * kPi * uni(rng);
    const Eigen::Vector3d dir =
        cos_a * axis + sin_a * (std::cos(phi) * e1 + std::sin(phi) * e2);
    const double dist = near_mm + uni(rng) * (far_mm - near_mm);
    const Eigen::Vector3d jitter(target_jitter_mm * (2.0 * uni(rng) - 1.0),
                                 target_jitter_mm * (2.0 * uni(rng) - 1.0),
                                 target_jitter_mm * (2.0 * uni(rng) - 1.0));
    poses.push_back(look_at(center + dist * dir, center + jitter, axis));
  }
  return poses;
}

}  // namespace navkit::sim
