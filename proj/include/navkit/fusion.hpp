/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "navkit/distortion.hpp"
#include "navkit/frame.hpp"
#include "navkit/mc_tables.hpp"
#include "navkit/tracking.hpp"

namespace navkit {

/// Axis-aligned reconstruction region in the reference-tool frame.
struct RoiBox {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();

  bool valid() const { return (lo.array() < hi.array()).all(); }

  RoiBox inflated(double margin_mm) const {
    return {lo.array() - margin_mm, hi.array() + margin_mm};
  }

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

/// Dense TSDF grid over an ROI. Voxel (0,0,0) center sits at `origin`;
/// tsdf is the truncation-normalized signed distance in [-1, 1], weight the
/// capped observation count.
struct TsdfVolume {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double voxel_size = 1.0;
  int nx = 0, ny = 0, nz = 0;
  double truncation = 3.0;
  float max_weight = 64.0f;
  std::vector<float> tsdf;
  std::vector<float> weight;

  TsdfVolume() = default;

  TsdfVolume(const Eigen::Vector3d& origin_mm, double voxel_mm, int nx_, int ny_, int nz_,
             double truncation_mm = -1.0)
      : origin(origin_mm),
        voxel_size(voxel_mm),
        nx(nx_),
        ny(ny_),
        nz(nz_),
        truncation(truncation_mm > 0.0 ? truncation_mm : 3.0 * voxel_mm),
        tsdf(size_t(nx_) * ny_ * nz_, 0.0f),
        weight(size_t(nx_) * ny_ * nz_, 0.0f) {
    if (nx < 2 || ny < 2 || nz < 2) throw std::invalid_argument("TsdfVolume: dims must be >= 2");
  }

  static TsdfVolume from_roi(const RoiBox& roi, double voxel_mm, double truncation_mm = -1.0) {
    if (!roi.valid()) throw std::invalid_argument("TsdfVolume: invalid ROI box");
    const Eigen::Vector3d extent = roi.hi - roi.lo;
    return TsdfVolume(roi.lo, voxel_mm, int(std::ceil(extent.x() / voxel_mm)) + 1,
                      int(std::ceil(extent.y() / voxel_mm)) + 1,
                      int(std::ceil(extent.z() / voxel_mm)) + 1, truncation_mm);
  }

  size_t index(int x, int y, int z) const {
    return (size_t(x) * ny + y) * nz + z;  // z contiguous
  }
  Eigen::Vector3d voxel_center(int x, int y, int z) const {
    return origin + Eigen::Vector3d(x, y, z) * voxel_size;
  }
  size_t voxel_count() const { return tsdf.size(); }
};

/// Projective TSDF update. `camera_pose` maps the sensor frame into the
/// volume frame. For every voxel projecting to a valid pixel with
/// sdf = depth - voxel_z > -truncation:
///   tsdf <- (w * tsdf + clamp(sdf / truncation)) / (w + 1), w <- min(w+1, max)
/// With `normals` given, the per-observation weight is the pixel's incidence
/// cosine instead of 1.
inline void integrate(TsdfVolume& vol, const DepthFrame& frame,
                      const RigidTransform& camera_pose,
                      const NormalGrid* normals = nullptr) {
  const RigidTransform vol_to_cam = camera_pose.inverse();
  const Eigen::Matrix3f rot = vol_to_cam.rotation.cast<float>();
  const Eigen::Vector3f trans = vol_to_cam.translation.cast<float>();
  const auto& k = frame.intrinsics;
  const float fx = float(k.fx), fy = float(k.fy), cx = float(k.cx), cy = float(k.cy);
  const float vs = float(vol.voxel_size);
  const float inv_trunc = 1.0f / float(vol.truncation);
  const float neg_trunc = -float(vol.truncation);
  const Eigen::Vector3f origin_cam = rot * vol.origin.cast<float>() + trans;
  const Eigen::Vector3f step_x = rot.col(0) * vs;
  const Eigen::Vector3f step_y = rot.col(1) * vs;
  const Eigen::Vector3f step_z = rot.col(2) * vs;

#pragma omp parallel for schedule(static)
  for (int x = 0; x < vol.nx; ++x) {
    for (int y = 0; y < vol.ny; ++y) {
      Eigen::Vector3f p = origin_cam + float(x) * step_x + float(y) * step_y;
      float* tsdf_col = &vol.tsdf[vol.index(x, y, 0)];
      float* weight_col = &vol.weight[vol.index(x, y, 0)];
      for (int z = 0; z < vol.nz; ++z, p += step_z) {
        const float pz = p.z();
        if (pz <= 0.0f) {
          if (step_z.z() <= 0.0f) break;  // receding behind the camera
          continue;
        }
        const float inv_z = 1.0f / pz;
        const int u = int(fx * p.x() * inv_z + cx + 0.5f);
        const int v = int(fy * p.y() * inv_z + cy + 0.5f);
        if (u < 0 || u >= k.width || v < 0 || v >= k.height) continue;
        const size_t pix = size_t(v) * k.width + u;
        const float d = frame.depth[pix];
        if (d == 0.0f) continue;
        const float sdf = d - pz;
        if (sdf <= neg_trunc) {
          if (step_z.z() >= 0.0f && pz > kMaxDepthMm - neg_trunc) break;
          continue;
        }
        float f = sdf * inv_trunc;
        if (f > 1.0f) f = 1.0f;
        float obs_w = 1.0f;
        if (normals) {
          obs_w = float(normals->incidence_cos(k, u, v));
          if (obs_w <= 0.0f) continue;
        }
        const float w = weight_col[z];
        tsdf_col[z] = (tsdf_col[z] * w + f * obs_w) / (w + obs_w);
        weight_col[z] = std::min(w + obs_w, vol.max_weight);
      }
    }
  }
}

/// ROI selection from a single frame: flood-fill the depth-connected region
/// around the seed pixel (neighbor gap < 10 mm), express it in the tool frame
/// and return its bounding box inflated by `margin_mm`.
inline RoiBox roi_from_frame(const DepthFrame& frame, const ToolPose& tool_pose, int seed_u,
                             int seed_v, double margin_mm = 20.0,
                             double depth_gap_mm = 10.0) {
  if (!frame.in_bounds(seed_u, seed_v) || !depth_valid(frame.depth_at(seed_u, seed_v)))
    throw std::invalid_argument("roi_from_frame: seed pixel has no valid depth");

  const RigidTransform sensor_to_tool = tool_pose.transform.inverse();
  std::vector<uint8_t> visited(frame.depth.size(), 0);
  std::vector<std::pair<int, int>> stack{{seed_u, seed_v}};
  visited[frame.index(seed_u, seed_v)] = 1;

  RoiBox roi;
  roi.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  roi.hi = -roi.lo;
  while (!stack.empty()) {
    const auto [u, v] = stack.back();
    stack.pop_back();
    const float d = frame.depth_at(u, v);
    const Eigen::Vector3d p = sensor_to_tool * unproject(frame.intrinsics, u, v, d);
    roi.lo = roi.lo.cwiseMin(p);
    roi.hi = roi.hi.cwiseMax(p);

    const int du[] = {1, -1, 0, 0};
    const int dv[] = {0, 0, 1, -1};
    for (int n = 0; n < 4; ++n) {
      const int nu = u + du[n], nv = v + dv[n];
      if (!frame.in_bounds(nu, nv)) continue;
      const size_t ni = frame.index(nu, nv);
      if (visited[ni]) continue;
      const float nd = frame.depth[ni];
      if (!depth_valid(nd) || std::abs(nd - d) >= depth_gap_mm) continue;
      visited[ni] = 1;
      stack.emplace_back(nu, nv);
    }
  }
  return roi.inflated(margin_mm);
}

/// Marching cubes over the zero crossing of the TSDF, linear interpolation
/// along cell edges. Only cells whose 8 corners all carry weight contribute.
/// Vertices come out in volume-frame mm.
inline TriangleMesh extract_mesh(const TsdfVolume& vol) {
  TriangleMesh mesh;
  // canonical corner offsets matching the lookup tables
  static constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                        {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  // edge -> (corner A, corner B)
  static constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {3, 2}, {0, 3}, {4, 5}, {5, 6},
                                       {7, 6}, {4, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  // dedup key: (voxel linear index of the lower corner, axis)
  auto edge_axis = [&](int e) {
    const int* a = kCorner[kEdge[e][0]];
    const int* b = kCorner[kEdge[e][1]];
    for (int ax = 0; ax < 3; ++ax) {
      if (a[ax] != b[ax]) return ax;
    }
    return 0;
  };

  std::unordered_map<uint64_t, int> edge_vertex;
  edge_vertex.reserve(4096);

  float corner_val[8];
  int vert_of_edge[12];

  for (int x = 0; x + 1 < vol.nx; ++x) {
    for (int y = 0; y + 1 < vol.ny; ++y) {
      for (int z = 0; z + 1 < vol.nz; ++z) {
        bool weighted = true;
        int cube_index = 0;
        for (int c = 0; c < 8 && weighted; ++c) {
          const size_t i =
              vol.index(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]);
          if (vol.weight[i] <= 0.0f) {
            weighted = false;
            break;
          }
          corner_val[c] = vol.tsdf[i];
          if (corner_val[c] < 0.0f) cube_index |= (1 << c);
        }
        if (!weighted || cube_index == 0 || cube_index == 255) continue;

        const uint16_t edges = mc::kEdgeTable[cube_index];
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1u << e))) continue;
          const int ca = kEdge[e][0], cb = kEdge[e][1];
          // key by lower-coordinate endpoint and axis
          const int axis = edge_axis(e);
          const int lower = kCorner[ca][axis] <= kCorner[cb][axis] ? ca : cb;
          const uint64_t key =
              (uint64_t(vol.index(x + kCorner[lower][0], y + kCorner[lower][1],
                                  z + kCorner[lower][2]))
               << 2) |
              uint64_t(axis);
          auto it = edge_vertex.find(key);
          if (it == edge_vertex.end()) {
            const float va = corner_val[ca], vb = corner_val[cb];
            double t = double(va) / (double(va) - double(vb));
            t = std::clamp(t, 0.0, 1.0);
            const Eigen::Vector3d pa =
                vol.voxel_center(x + kCorner[ca][0], y + kCorner[ca][1], z + kCorner[ca][2]);
            const Eigen::Vector3d pb =
                vol.voxel_center(x + kCorner[cb][0], y + kCorner[cb][1], z + kCorner[cb][2]);
            mesh.vertices.push_back(pa + t * (pb - pa));
            it = edge_vertex.emplace(key, int(mesh.vertices.size()) - 1).first;
          }
          vert_of_edge[e] = it->second;
        }

        const int8_t* tri = mc::kTriTable[cube_index];
        for (int i = 0; tri[i] != -1; i += 3) {
          // table order winds inward for this corner embedding; emit outward
          const std::array<int, 3> t = {vert_of_edge[tri[i]], vert_of_edge[tri[i + 2]],
                                        vert_of_edge[tri[i + 1]]};
          // a zero field value at a corner collapses two edge vertices
          const Eigen::Vector3d area =
              (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                  .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]);
          if (area.squaredNorm() < 1e-20) continue;
          mesh.triangles.push_back(t);
        }
      }
    }
  }
  return mesh;
}

struct TrackedFrame {
  DepthFrame frame;
  std::optional<ToolPose> tool_pose;
};

struct ReconstructOptions {
  double voxel_size = 1.0;
  double truncation = -1.0;  // default 3 * voxel_size
  bool cos_weighting = false;
  // Retro-reflective pixels follow the retro distortion model, not the
  // patient model, so they are masked out of the fusion by default.
  bool mask_bright_ir = true;
  int mask_dilation_px = 2;
};

/// Full reconstruction: correct each frame with the patient parameters, take
/// the camera pose as the inverse of the tracked tool pose, integrate every
/// posed frame in order and extract the surface clipped to the ROI.
inline TriangleMesh reconstruct(const std::vector<TrackedFrame>& frames,
                                const DistortionParams& params, const RoiBox& roi,
                                const ReconstructOptions& options = {}) {
  if (!roi.valid()) throw std::invalid_argument("reconstruct: invalid ROI");
  TsdfVolume volume = TsdfVolume::from_roi(roi, options.voxel_size, options.truncation);

  size_t used = 0;
  for (const auto& tracked : frames) {
    if (!tracked.tool_pose) continue;
    const NormalGrid normals = estimate_normals(tracked.frame);
    DepthFrame corrected = correct_depth(tracked.frame, params, normals);

    if (options.mask_bright_ir) {
      for (const auto& blob : detect_blobs(corrected)) {
        for (const auto& [u, v] : blob.pixels) {
          for (int dv = -options.mask_dilation_px; dv <= options.mask_dilation_px; ++dv) {
            for (int du = -options.mask_dilation_px; du <= options.mask_dilation_px; ++du) {
              if (corrected.in_bounds(u + du, v + dv)) corrected.depth_at(u + du, v + dv) = 0.0f;
            }
          }
        }
      }
    }

    integrate(volume, corrected, tracked.tool_pose->transform.inverse(),
              options.cos_weighting ? &normals : nullptr);
    used++;
  }
  if (used == 0) throw std::runtime_error("reconstruct: no frame carries a valid tool pose");
  return extract_mesh(volume);
}

}  // namespace navkit
