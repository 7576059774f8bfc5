/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "navkit/geometry.hpp"

namespace navkit {

// Sensor near/far clip. Depth 0 marks an invalid pixel.
constexpr float kMinDepthMm = 150.0f;
constexpr float kMaxDepthMm = 1000.0f;

inline bool depth_valid(float d) { return d >= kMinDepthMm && d <= kMaxDepthMm; }

/// One sensor capture: per-pixel depth (mm, camera-frame z) and active IR
/// reflectivity counts, both row-major width x height.
struct DepthFrame {
  CameraIntrinsics intrinsics;
  std::vector<float> depth;
  std::vector<uint16_t> ir;
  uint64_t timestamp_us = 0;

  DepthFrame() = default;
  explicit DepthFrame(const CameraIntrinsics& k)
      : intrinsics(k),
        depth(size_t(k.width) * size_t(k.height), 0.0f),
        ir(size_t(k.width) * size_t(k.height), 0) {}

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  size_t index(int u, int v) const { return size_t(v) * size_t(intrinsics.width) + size_t(u); }
  bool in_bounds(int u, int v) const {
    return u >= 0 && u < intrinsics.width && v >= 0 && v < intrinsics.height;
  }

  float depth_at(int u, int v) const { return depth[index(u, v)]; }
  float& depth_at(int u, int v) { return depth[index(u, v)]; }
  uint16_t ir_at(int u, int v) const { return ir[index(u, v)]; }
  uint16_t& ir_at(int u, int v) { return ir[index(u, v)]; }

  size_t valid_count() const {
    size_t n = 0;
    for (float d : depth) n += depth_valid(d) ? 1 : 0;
    return n;
  }
};

/// Point set in mm; normals, when present, are unit length and parallel to
/// points (same index).
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty() && normals.size() == points.size(); }

  PointCloud transformed(const RigidTransform& t) const {
    PointCloud out;
    out.points.reserve(points.size());
    for (const auto& p : points) out.points.push_back(t * p);
    out.normals.reserve(normals.size());
    for (const auto& n : normals) out.normals.push_back(t.rotate(n));
    return out;
  }
};

/// Indexed triangle mesh, vertices in mm.
struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  TriangleMesh transformed(const RigidTransform& t) const {
    TriangleMesh out;
    out.vertices.reserve(vertices.size());
    for (const auto& v : vertices) out.vertices.push_back(t * v);
    out.triangles = triangles;
    return out;
  }

  double surface_area() const {
    double a = 0.0;
    for (const auto& tri : triangles) {
      const Eigen::Vector3d e1 = vertices[tri[1]] - vertices[tri[0]];
      const Eigen::Vector3d e2 = vertices[tri[2]] - vertices[tri[0]];
      a += 0.5 * e1.cross(e2).norm();
    }
    return a;
  }

  Eigen::Vector3d triangle_normal(size_t i) const {
    const auto& tri = triangles[i];
    const Eigen::Vector3d e1 = vertices[tri[1]] - vertices[tri[0]];
    const Eigen::Vector3d e2 = vertices[tri[2]] - vertices[tri[0]];
    return e1.cross(e2).normalized();
  }

  /// True when all indices are in range and no triangle repeats a vertex.
  bool topology_valid() const {
    const int n = int(vertices.size());
    for (const auto& t : triangles) {
      for (int k = 0; k < 3; ++k) {
        if (t[k] < 0 || t[k] >= n) return false;
      }
      if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) return false;
    }
    return true;
  }
};

}  // namespace navkit
