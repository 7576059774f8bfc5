/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "navkit/distortion.hpp"
#include "navkit/frame.hpp"

namespace navkit {

/// Rigid constellation of >= 4 retro-reflective markers. Pairwise inter-marker
/// distances must be unique (> 2 mm apart) so distance-consistency matching is
/// unambiguous.
struct ToolDefinition {
  std::string name;
  std::vector<Eigen::Vector3d> marker_positions;  // tool frame, mm
  double marker_diameter_mm = 10.0;

  bool geometry_valid(double min_separation_mm = 2.0) const {
    if (marker_positions.size() < 4) return false;
    std::vector<double> dists;
    for (size_t i = 0; i < marker_positions.size(); ++i) {
      for (size_t j = i + 1; j < marker_positions.size(); ++j) {
        dists.push_back((marker_positions[i] - marker_positions[j]).norm());
      }
    }
    std::sort(dists.begin(), dists.end());
    for (size_t i = 1; i < dists.size(); ++i) {
      if (dists[i] - dists[i - 1] <= min_separation_mm) return false;
    }
    return true;
  }
};

/// Fitted tool pose: transform maps tool frame to sensor frame (T_tool^sensor).
struct ToolPose {
  RigidTransform transform;
  double rms_fit_residual = 0.0;
  int matched_marker_count = 0;
  uint64_t timestamp_us = 0;
};

struct Blob {
  Eigen::Vector2d centroid_px;
  std::vector<std::pair<int, int>> pixels;  // (u, v)
  double mean_depth_mm = 0.0;
};

/// Otsu threshold over the IR histogram; returns the count value separating
/// dim surfaces from bright retro-reflective pixels. Zero-IR background is
/// excluded so the split lands between the two reflective populations rather
/// than at the background boundary.
inline uint16_t otsu_ir_threshold(const DepthFrame& frame) {
  uint16_t max_ir = 0;
  for (uint16_t x : frame.ir) max_ir = std::max(max_ir, x);
  if (max_ir == 0) return 1;

  constexpr int kBins = 256;
  const double scale = double(kBins - 1) / double(max_ir);
  std::vector<int64_t> hist(kBins, 0);
  int64_t total = 0;
  for (uint16_t x : frame.ir) {
    if (x == 0) continue;
    hist[int(x * scale)]++;
    total++;
  }
  if (total == 0) return 1;
  double sum_all = 0.0;
  for (int i = 0; i < kBins; ++i) sum_all += double(i) * double(hist[i]);

  double best_sigma = -1.0;
  int best_bin = kBins / 2;
  double sum_b = 0.0;
  int64_t w_b = 0;
  for (int i = 0; i < kBins; ++i) {
    w_b += hist[i];
    if (w_b == 0) continue;
    const int64_t w_f = total - w_b;
    if (w_f == 0) break;
    sum_b += double(i) * double(hist[i]);
    const double m_b = sum_b / double(w_b);
    const double m_f = (sum_all - sum_b) / double(w_f);
    const double sigma = double(w_b) * double(w_f) * (m_b - m_f) * (m_b - m_f);
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_bin = i;
    }
  }
  return uint16_t(std::min<double>(65535.0, (best_bin + 1) / scale));
}

/// Connected components (8-connectivity) of pixels with ir >= threshold.
/// Components smaller than 4 px or larger than 2000 px are discarded;
/// centroids are IR-intensity weighted.
inline std::vector<Blob> detect_blobs(const DepthFrame& frame,
                                      std::optional<uint16_t> ir_threshold = std::nullopt) {
  const uint16_t threshold = ir_threshold ? *ir_threshold : otsu_ir_threshold(frame);
  const int w = frame.width(), h = frame.height();

  std::vector<uint8_t> visited(size_t(w) * h, 0);
  std::vector<Blob> blobs;
  std::vector<std::pair<int, int>> stack;

  for (int v0 = 0; v0 < h; ++v0) {
    for (int u0 = 0; u0 < w; ++u0) {
      const size_t i0 = frame.index(u0, v0);
      if (visited[i0] || frame.ir[i0] < threshold) continue;

      Blob blob;
      stack.clear();
      stack.emplace_back(u0, v0);
      visited[i0] = 1;
      double wu = 0.0, wv = 0.0, wsum = 0.0, depth_sum = 0.0;
      int depth_count = 0;
      while (!stack.empty()) {
        const auto [u, v] = stack.back();
        stack.pop_back();
        blob.pixels.emplace_back(u, v);
        const double ir = double(frame.ir_at(u, v));
        wu += ir * u;
        wv += ir * v;
        wsum += ir;
        const float d = frame.depth_at(u, v);
        if (depth_valid(d)) {
          depth_sum += d;
          depth_count++;
        }
        for (int dv = -1; dv <= 1; ++dv) {
          for (int du = -1; du <= 1; ++du) {
            const int nu = u + du, nv = v + dv;
            if (!frame.in_bounds(nu, nv)) continue;
            const size_t ni = frame.index(nu, nv);
            if (visited[ni] || frame.ir[ni] < threshold) continue;
            visited[ni] = 1;
            stack.emplace_back(nu, nv);
          }
        }
      }
      if (blob.pixels.size() < 4 || blob.pixels.size() > 2000 || wsum <= 0.0) continue;
      blob.centroid_px = {wu / wsum, wv / wsum};
      blob.mean_depth_mm = depth_count > 0 ? depth_sum / depth_count : 0.0;
      blobs.push_back(std::move(blob));
    }
  }
  return blobs;
}

/// 3D marker centers: unproject each blob at its robust (median) depth, then
/// shift along the viewing ray per the retro material correction. Blobs with
/// no valid depth are dropped; `kept_blob_indices`, when given, receives the
/// source blob index of each emitted center.
inline PointCloud blob_centers_3d(const std::vector<Blob>& blobs, const DepthFrame& frame,
                                  const DistortionParams& retro_params,
                                  std::vector<int>* kept_blob_indices = nullptr) {
  PointCloud centers;
  if (kept_blob_indices) kept_blob_indices->clear();
  for (size_t blob_index = 0; blob_index < blobs.size(); ++blob_index) {
    const Blob& blob = blobs[blob_index];
    std::vector<double> depths;
    depths.reserve(blob.pixels.size());
    Eigen::Vector3d normal_acc = Eigen::Vector3d::Zero();
    for (const auto& [u, v] : blob.pixels) {
      const float d = frame.depth_at(u, v);
      if (depth_valid(d)) depths.push_back(d);
    }
    if (depths.empty()) continue;
    std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
    double depth = depths[depths.size() / 2];  // robust anchor

    // incidence and depth refinement from a plane fit over the blob's own
    // pixels: the median quantizes by pixel rows on tilted markers, while the
    // fitted plane averages that out. The median gates the refinement.
    const Eigen::Vector3d ray_raw =
        pixel_ray(frame.intrinsics, blob.centroid_px.x(), blob.centroid_px.y());
    double cos_t = 1.0;
    {
      Eigen::Vector3d mean = Eigen::Vector3d::Zero();
      std::vector<Eigen::Vector3d> pts;
      for (const auto& [u, v] : blob.pixels) {
        const float d = frame.depth_at(u, v);
        if (!depth_valid(d)) continue;
        pts.push_back(unproject(frame.intrinsics, u, v, d));
        mean += pts.back();
      }
      if (pts.size() >= 6) {
        mean /= double(pts.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
        eig.computeDirect(cov);
        normal_acc = eig.eigenvectors().col(0);
        if (normal_acc.dot(ray_raw) > 0.0) normal_acc = -normal_acc;
        cos_t = std::clamp(-normal_acc.dot(ray_raw.normalized()), 0.0, 1.0);

        const double denom = ray_raw.dot(normal_acc);
        if (std::abs(denom) > 1e-9) {
          const double plane_depth = mean.dot(normal_acc) / denom;  // ray z = 1
          if (std::abs(plane_depth - depth) <= 2.0) depth = plane_depth;
        }
      }
    }

    const Eigen::Vector3d center =
        unproject(frame.intrinsics, blob.centroid_px.x(), blob.centroid_px.y(), depth);
    centers.points.push_back(
        correct_marker_center(center, center.normalized(), retro_params, cos_t));
    if (kept_blob_indices) kept_blob_indices->push_back(int(blob_index));
  }
  return centers;
}

/// Assignment of detected centers to tool markers: pairs[i] = (marker index,
/// center index).
struct ConstellationMatch {
  std::vector<std::pair<int, int>> pairs;
  double rms_distance_error = 0.0;
};

namespace detail {

struct MatchSearch {
  const std::vector<Eigen::Vector3d>* centers;
  const std::vector<Eigen::Vector3d>* markers;
  double tolerance;
  std::vector<int> assignment;  // marker -> center index or -1
  std::vector<char> center_used;
  std::vector<std::pair<int, int>> best_pairs;
  double best_err = 0.0;

  void consider(double sq_err_sum, int matched) {
    if (matched < 4) return;
    const double rms = std::sqrt(sq_err_sum / (double(matched) * (matched - 1) / 2.0));
    if (size_t(matched) > best_pairs.size() ||
        (size_t(matched) == best_pairs.size() && rms < best_err)) {
      best_pairs.clear();
      for (size_t m = 0; m < assignment.size(); ++m) {
        if (assignment[m] >= 0) best_pairs.emplace_back(int(m), assignment[m]);
      }
      best_err = rms;
    }
  }

  // Depth-first over markers; each marker maps to an unused center or is
  // skipped. Pairwise distances against already-assigned markers prune early.
  void recurse(size_t marker, int matched, double sq_err_sum, int skipped) {
    const int n_markers = int(markers->size());
    // even matching every remaining marker cannot beat the current best
    if (matched + (n_markers - int(marker)) < std::max<int>(4, int(best_pairs.size()) + 1) &&
        !(matched + (n_markers - int(marker)) == int(best_pairs.size()) && best_pairs.size() >= 4))
      return;
    if (marker == markers->size()) {
      consider(sq_err_sum, matched);
      return;
    }
    for (int c = 0; c < int(centers->size()); ++c) {
      if (center_used[c]) continue;
      double add = 0.0;
      bool ok = true;
      for (size_t m = 0; m < marker; ++m) {
        if (assignment[m] < 0) continue;
        const double d_tool = ((*markers)[marker] - (*markers)[m]).norm();
        const double d_obs = ((*centers)[c] - (*centers)[assignment[m]]).norm();
        const double err = d_obs - d_tool;
        if (std::abs(err) > tolerance) {
          ok = false;
          break;
        }
        add += err * err;
      }
      if (!ok) continue;
      assignment[marker] = c;
      center_used[c] = 1;
      recurse(marker + 1, matched + 1, sq_err_sum + add, skipped);
      center_used[c] = 0;
      assignment[marker] = -1;
    }
    recurse(marker + 1, matched, sq_err_sum, skipped + 1);
  }
};

}  // namespace detail

/// Find the assignment of detected centers to tool markers maximizing the
/// number of pairwise distances that agree within tolerance; ties break on
/// lower RMS distance error. Assignments smaller than 4 are rejected.
inline std::optional<ConstellationMatch> match_constellation(const PointCloud& centers,
                                                             const ToolDefinition& tool,
                                                             double tolerance_mm = 2.0) {
  if (centers.size() < 4) return std::nullopt;
  detail::MatchSearch search;
  search.centers = &centers.points;
  search.markers = &tool.marker_positions;
  search.tolerance = tolerance_mm;
  search.assignment.assign(tool.marker_positions.size(), -1);
  search.center_used.assign(centers.size(), 0);
  search.recurse(0, 0, 0.0, 0);
  if (search.best_pairs.size() < 4) return std::nullopt;
  return ConstellationMatch{search.best_pairs, search.best_err};
}

/// Least-squares rigid pose from matched (tool point, sensor point) pairs.
/// Requires >= 3 non-collinear pairs; callers enforce >= 4 matched markers.
inline std::optional<ToolPose> fit_pose(const std::vector<Eigen::Vector3d>& tool_points,
                                        const std::vector<Eigen::Vector3d>& sensor_points,
                                        uint64_t timestamp_us = 0) {
  const auto fit = fit_rigid(tool_points, sensor_points);
  if (!fit) return std::nullopt;
  ToolPose pose;
  pose.transform = fit->transform;
  pose.rms_fit_residual = fit->rms;
  pose.matched_marker_count = int(tool_points.size());
  pose.timestamp_us = timestamp_us;
  return pose;
}

/// Full per-frame pipeline: detect blobs, lift to 3D centers, match each tool
/// against the centers not consumed by an earlier tool, fit its pose. Tools
/// that cannot be matched produce no entry; the output parallels `tools` via
/// the name stored alongside.
struct TrackResult {
  std::string tool_name;
  std::optional<ToolPose> pose;
};

inline std::vector<TrackResult> track(const DepthFrame& frame,
                                      const std::vector<ToolDefinition>& tools,
                                      const DistortionParams& retro_params,
                                      std::optional<uint16_t> ir_threshold = std::nullopt) {
  std::vector<TrackResult> results;
  const auto blobs = detect_blobs(frame, ir_threshold);
  PointCloud centers = blob_centers_3d(blobs, frame, retro_params);

  std::vector<char> consumed(centers.size(), 0);
  for (const auto& tool : tools) {
    PointCloud available;
    std::vector<int> available_index;
    for (size_t i = 0; i < centers.size(); ++i) {
      if (!consumed[i]) {
        available.points.push_back(centers.points[i]);
        available_index.push_back(int(i));
      }
    }
    TrackResult result;
    result.tool_name = tool.name;
    const auto match = match_constellation(available, tool);
    if (match) {
      std::vector<Eigen::Vector3d> src, dst;
      for (const auto& [marker, center] : match->pairs) {
        src.push_back(tool.marker_positions[marker]);
        dst.push_back(available.points[center]);
        consumed[available_index[center]] = 1;
      }
      result.pose = fit_pose(src, dst, frame.timestamp_us);
    }
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace navkit
