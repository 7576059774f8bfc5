/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "navkit/bvh.hpp"
#include "navkit/frame.hpp"
#include "navkit/stats.hpp"

namespace navkit {

/// Parametric depth-error model: the measured depth deviates from the true
/// depth by  delta(d, theta) = c1 + c2*d + c3*(1 - cos theta),  where theta is
/// the incidence angle between the viewing ray and the surface normal.
/// One parameter set per material (and per patient for skin).
struct DistortionParams {
  double c1 = 0.0;  // constant offset, mm
  double c2 = 0.0;  // per-mm depth slope
  double c3 = 0.0;  // orientation coefficient, mm
  std::string material;

  static constexpr double kMaxC1 = 30.0;
  static constexpr double kMaxC2 = 0.1;
  static constexpr double kMaxC3 = 30.0;

  bool within_bounds() const {
    return std::isfinite(c1) && std::isfinite(c2) && std::isfinite(c3) &&
           std::abs(c1) <= kMaxC1 && std::abs(c2) <= kMaxC2 && std::abs(c3) <= kMaxC3;
  }

  bool is_zero() const { return c1 == 0.0 && c2 == 0.0 && c3 == 0.0; }

  double delta(double depth_mm, double incidence_cos) const {
    return c1 + c2 * depth_mm + c3 * (1.0 - incidence_cos);
  }
};

/// Per-pixel surface normals with validity flags, camera frame, oriented
/// toward the camera (normal dot ray < 0).
struct NormalGrid {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3f> normals;
  std::vector<uint8_t> valid;

  size_t index(int u, int v) const { return size_t(v) * size_t(width) + size_t(u); }
  bool valid_at(int u, int v) const { return valid[index(u, v)] != 0; }
  Eigen::Vector3d normal_at(int u, int v) const { return normals[index(u, v)].cast<double>(); }

  /// cos of the incidence angle at (u, v); 1 (head-on) when the normal is
  /// invalid, which is the correction's documented fallback.
  double incidence_cos(const CameraIntrinsics& k, int u, int v) const {
    if (!valid_at(u, v)) return 1.0;
    const Eigen::Vector3d ray = pixel_ray(k, u, v).normalized();
    return std::clamp(-normal_at(u, v).dot(ray), 0.0, 1.0);
  }
};

/// Per-pixel normal from a least-squares plane fit over the k x k pixel
/// neighborhood of unprojected points (k = 5). Pixels with fewer than 6 valid
/// neighbors get an invalid normal. Windowed moment sums are built with
/// separable box filters so the cost is independent of window size.
inline NormalGrid estimate_normals(const DepthFrame& frame, int window = 5) {
  const int w = frame.width(), h = frame.height();
  const int r = window / 2;
  NormalGrid grid;
  grid.width = w;
  grid.height = h;
  grid.normals.assign(size_t(w) * h, Eigen::Vector3f::Zero());
  grid.valid.assign(size_t(w) * h, 0);

  // moment channels per pixel: count, x, y, z, xx, xy, xz, yy, yz, zz
  constexpr int kChannels = 10;
  std::vector<double> moments(size_t(w) * h * kChannels, 0.0);
  const auto& k = frame.intrinsics;

#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const float d = frame.depth_at(u, v);
      if (!depth_valid(d)) continue;
      const Eigen::Vector3d p = unproject(k, u, v, d);
      double* m = &moments[(size_t(v) * w + u) * kChannels];
      m[0] = 1.0;
      m[1] = p.x();
      m[2] = p.y();
      m[3] = p.z();
      m[4] = p.x() * p.x();
      m[5] = p.x() * p.y();
      m[6] = p.x() * p.z();
      m[7] = p.y() * p.y();
      m[8] = p.y() * p.z();
      m[9] = p.z() * p.z();
    }
  }

  // horizontal then vertical window sums
  std::vector<double> hsum(size_t(w) * h * kChannels, 0.0);
#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    for (int c = 0; c < kChannels; ++c) {
      double acc = 0.0;
      for (int u = 0; u < std::min(r, w); ++u) acc += moments[(size_t(v) * w + u) * kChannels + c];
      for (int u = 0; u < w; ++u) {
        if (u + r < w) acc += moments[(size_t(v) * w + u + r) * kChannels + c];
        hsum[(size_t(v) * w + u) * kChannels + c] = acc;
        if (u - r >= 0) acc -= moments[(size_t(v) * w + u - r) * kChannels + c];
      }
    }
  }
  std::vector<double> wsum(size_t(w) * h * kChannels, 0.0);
#pragma omp parallel for schedule(static)
  for (int u = 0; u < w; ++u) {
    for (int c = 0; c < kChannels; ++c) {
      double acc = 0.0;
      for (int v = 0; v < std::min(r, h); ++v) acc += hsum[(size_t(v) * w + u) * kChannels + c];
      for (int v = 0; v < h; ++v) {
        if (v + r < h) acc += hsum[(size_t(v + r) * w + u) * kChannels + c];
        wsum[(size_t(v) * w + u) * kChannels + c] = acc;
        if (v - r >= 0) acc -= hsum[(size_t(v - r) * w + u) * kChannels + c];
      }
    }
  }

#pragma omp parallel for schedule(static)
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!depth_valid(frame.depth_at(u, v))) continue;
      const double* m = &wsum[(size_t(v) * w + u) * kChannels];
      const double n = m[0];
      if (n < 6.0) continue;
      const Eigen::Vector3d mean(m[1] / n, m[2] / n, m[3] / n);
      Eigen::Matrix3d cov;
      cov(0, 0) = m[4] / n - mean.x() * mean.x();
      cov(0, 1) = cov(1, 0) = m[5] / n - mean.x() * mean.y();
      cov(0, 2) = cov(2, 0) = m[6] / n - mean.x() * mean.z();
      cov(1, 1) = m[7] / n - mean.y() * mean.y();
      cov(1, 2) = cov(2, 1) = m[8] / n - mean.y() * mean.z();
      cov(2, 2) = m[9] / n - mean.z() * mean.z();

      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
      eig.computeDirect(cov);
      Eigen::Vector3d normal = eig.eigenvectors().col(0);  // smallest eigenvalue
      const Eigen::Vector3d ray = pixel_ray(k, u, v);
      if (normal.dot(ray) > 0.0) normal = -normal;
      grid.normals[grid.index(u, v)] = normal.cast<float>();
      grid.valid[grid.index(u, v)] = 1;
    }
  }
  return grid;
}

/// Apply the depth-error correction to every valid pixel:
///   corrected = d - [c1 + c2*d + c3*(1 - cos theta)].
/// Corrected values falling outside the sensor range become invalid.
inline DepthFrame correct_depth(const DepthFrame& frame, const DistortionParams& params,
                                const NormalGrid& normals) {
  DepthFrame out = frame;
  if (params.is_zero()) return out;
  const auto& k = frame.intrinsics;
#pragma omp parallel for schedule(static)
  for (int v = 0; v < frame.height(); ++v) {
    for (int u = 0; u < frame.width(); ++u) {
      const float d = frame.depth_at(u, v);
      if (!depth_valid(d)) continue;
      const double cos_t = normals.incidence_cos(k, u, v);
      const double corrected = double(d) - params.delta(d, cos_t);
      out.depth_at(u, v) = depth_valid(float(corrected)) ? float(corrected) : 0.0f;
    }
  }
  return out;
}

inline DepthFrame correct_depth(const DepthFrame& frame, const DistortionParams& params) {
  if (params.is_zero()) return frame;
  return correct_depth(frame, params, estimate_normals(frame));
}

/// Correct a retro-reflective marker center along its viewing ray using the
/// retro material's parameters. The shift magnitude uses the ray distance of
/// the center; lateral position is untouched.
inline Eigen::Vector3d correct_marker_center(const Eigen::Vector3d& center,
                                             const Eigen::Vector3d& view_ray_unit,
                                             const DistortionParams& retro_params,
                                             double incidence_cos) {
  const double range = center.norm();
  return center - view_ray_unit * retro_params.delta(range, incidence_cos);
}

/// Unsigned point-to-surface error statistics: median and IQR by exact order
/// statistics (type-7 quantiles), plus the raw per-point errors.
struct DepthErrorStats {
  double median = 0.0;
  double iqr = 0.0;
  std::vector<double> errors;
};

inline DepthErrorStats depth_error_stats(const PointCloud& measured, const TriangleBvh& truth) {
  if (measured.empty()) throw std::invalid_argument("depth_error_stats: empty cloud");
  DepthErrorStats stats;
  stats.errors.resize(measured.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(measured.size()); ++i) {
    stats.errors[i] = truth.distance(measured.points[i]);
  }
  const auto mi = median_iqr(stats.errors);
  stats.median = mi.median;
  stats.iqr = mi.iqr;
  return stats;
}

inline DepthErrorStats depth_error_stats(const PointCloud& measured, const TriangleMesh& truth) {
  const TriangleBvh bvh(truth);
  return depth_error_stats(measured, bvh);
}

inline DepthErrorStats depth_error_stats(const PointCloud& measured, const PointCloud& truth) {
  if (measured.empty()) throw std::invalid_argument("depth_error_stats: empty cloud");
  const KdTree3 tree(truth.points);
  DepthErrorStats stats;
  stats.errors.resize(measured.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(measured.size()); ++i) {
    stats.errors[i] = std::sqrt(tree.nearest(measured.points[i]).sq_distance);
  }
  const auto mi = median_iqr(stats.errors);
  stats.median = mi.median;
  stats.iqr = mi.iqr;
  return stats;
}

/// Valid pixels of a frame as a camera-frame point cloud.
inline PointCloud frame_to_cloud(const DepthFrame& frame, int stride = 1) {
  PointCloud cloud;
  for (int v = 0; v < frame.height(); v += stride) {
    for (int u = 0; u < frame.width(); u += stride) {
      const float d = frame.depth_at(u, v);
      if (depth_valid(d)) cloud.points.push_back(unproject(frame.intrinsics, u, v, d));
    }
  }
  return cloud;
}

}  // namespace navkit
