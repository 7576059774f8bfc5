/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "navkit/frame.hpp"

namespace navkit {

struct Aabb {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());

  void expand(const Eigen::Vector3d& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  Eigen::Vector3d center() const { return 0.5 * (lo + hi); }

  // Slab test; returns entry distance or nullopt. dir_inv = 1/dir componentwise.
  std::optional<double> ray_hit(const Eigen::Vector3d& org, const Eigen::Vector3d& dir_inv,
                                double t_max) const {
    double t0 = 0.0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
      double ta = (lo[a] - org[a]) * dir_inv[a];
      double tb = (hi[a] - org[a]) * dir_inv[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return std::nullopt;
    }
    return t0;
  }

  double sq_distance(const Eigen::Vector3d& p) const {
    double sq = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double d = std::max({lo[a] - p[a], 0.0, p[a] - hi[a]});
      sq += d * d;
    }
    return sq;
  }
};

struct RayHit {
  double t = 0.0;             // distance along the (unit) ray direction
  int triangle = -1;
  Eigen::Vector3d normal;     // geometric normal, unit length
};

struct SurfacePoint {
  Eigen::Vector3d point;
  double distance = 0.0;
  int triangle = -1;
};

/// Closest point on triangle (a, b, c) to p (Ericson, Real-Time Collision
/// Detection, 5.1.5).
inline Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p,
                                                 const Eigen::Vector3d& a,
                                                 const Eigen::Vector3d& b,
                                                 const Eigen::Vector3d& c) {
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

/// Bounding volume hierarchy over mesh triangles. Supports first-hit ray casts
/// and closest-point queries; both are required at 512x512 x thousands of
/// frames, where brute force is intractable.
class TriangleBvh {
 public:
  TriangleBvh() = default;

  explicit TriangleBvh(const TriangleMesh& mesh) : mesh_(&mesh) {
    const size_t n = mesh.triangles.size();
    tri_order_.resize(n);
    std::iota(tri_order_.begin(), tri_order_.end(), 0);
    boxes_.resize(n);
    centers_.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const auto& t = mesh.triangles[i];
      Aabb b;
      b.expand(mesh.vertices[t[0]]);
      b.expand(mesh.vertices[t[1]]);
      b.expand(mesh.vertices[t[2]]);
      boxes_[i] = b;
      centers_[i] = b.center();
    }
    nodes_.reserve(n == 0 ? 1 : 2 * n);
    if (n > 0) build(0, n);
  }

  bool empty() const { return nodes_.empty(); }
  const Aabb& bounds() const { return nodes_[0].box; }

  /// First intersection of the ray org + t*dir (dir unit length) in (t_min, t_max).
  std::optional<RayHit> raycast(const Eigen::Vector3d& org, const Eigen::Vector3d& dir,
                                double t_min = 1e-6,
                                double t_max = std::numeric_limits<double>::infinity()) const {
    if (nodes_.empty()) return std::nullopt;
    const Eigen::Vector3d dir_inv = dir.cwiseInverse();

    RayHit best;
    best.t = t_max;
    bool found = false;

    int stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (!node.box.ray_hit(org, dir_inv, best.t)) continue;
      if (node.count > 0) {
        for (int i = node.first; i < node.first + node.count; ++i) {
          RayHit h;
          if (intersect_triangle(tri_order_[i], org, dir, t_min, best.t, h)) {
            best = h;
            found = true;
          }
        }
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    }
    if (!found) return std::nullopt;
    return best;
  }

  /// Closest point on the mesh surface to p.
  SurfacePoint closest_point(const Eigen::Vector3d& p) const {
    SurfacePoint best;
    best.distance = std::numeric_limits<double>::infinity();
    if (nodes_.empty()) return best;

    double best_sq = std::numeric_limits<double>::infinity();
    // Priority order by node distance keeps the search near-logarithmic.
    struct Entry {
      double sq;
      int node;
    };
    Entry stack[64];
    int top = 0;
    stack[top++] = {nodes_[0].box.sq_distance(p), 0};
    while (top > 0) {
      const Entry e = stack[--top];
      if (e.sq >= best_sq) continue;
      const Node& node = nodes_[e.node];
      if (node.count > 0) {
        for (int i = node.first; i < node.first + node.count; ++i) {
          const int tri = tri_order_[i];
          const auto& t = mesh_->triangles[tri];
          const Eigen::Vector3d q = closest_point_on_triangle(
              p, mesh_->vertices[t[0]], mesh_->vertices[t[1]], mesh_->vertices[t[2]]);
          const double sq = (q - p).squaredNorm();
          if (sq < best_sq) {
            best_sq = sq;
            best.point = q;
            best.triangle = tri;
          }
        }
      } else {
        Entry a{nodes_[node.left].box.sq_distance(p), node.left};
        Entry b{nodes_[node.right].box.sq_distance(p), node.right};
        if (a.sq > b.sq) std::swap(a, b);  // nearer child popped first
        if (b.sq < best_sq) stack[top++] = b;
        if (a.sq < best_sq) stack[top++] = a;
      }
    }
    best.distance = std::sqrt(best_sq);
    return best;
  }

  double distance(const Eigen::Vector3d& p) const { return closest_point(p).distance; }

 private:
  struct Node {
    Aabb box;
    int first = 0;  // first triangle slot (leaves only)
    int count = 0;  // triangle count; 0 marks an interior node
    int left = -1;
    int right = -1;
  };

  int build(size_t begin, size_t end) {
    const int node_index = int(nodes_.size());
    nodes_.emplace_back();
    Aabb box;
    for (size_t i = begin; i < end; ++i) box.expand(boxes_[tri_order_[i]]);
    nodes_[node_index].box = box;

    const size_t count = end - begin;
    if (count <= 4) {
      nodes_[node_index].first = int(begin);
      nodes_[node_index].count = int(count);
      return node_index;
    }

    const Eigen::Vector3d extent = box.hi - box.lo;
    int axis = 0;
    if (extent.y() > extent.x()) axis = 1;
    if (extent.z() > extent[axis]) axis = 2;

    const size_t mid = begin + count / 2;
    std::nth_element(tri_order_.begin() + begin, tri_order_.begin() + mid,
                     tri_order_.begin() + end, [&](int a, int b) {
                       return centers_[a][axis] < centers_[b][axis];
                     });

    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[node_index].left = left;
    nodes_[node_index].right = right;
    return node_index;
  }

  bool intersect_triangle(int tri, const Eigen::Vector3d& org, const Eigen::Vector3d& dir,
                          double t_min, double t_max, RayHit& out) const {
    const auto& t = mesh_->triangles[tri];
    const Eigen::Vector3d& a = mesh_->vertices[t[0]];
    const Eigen::Vector3d e1 = mesh_->vertices[t[1]] - a;
    const Eigen::Vector3d e2 = mesh_->vertices[t[2]] - a;

    // Moller-Trumbore
    const Eigen::Vector3d pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-12) return false;
    const double inv_det = 1.0 / det;
    const Eigen::Vector3d tvec = org - a;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < 0.0 || u > 1.0) return false;
    const Eigen::Vector3d qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) return false;
    const double hit_t = e2.dot(qvec) * inv_det;
    if (hit_t <= t_min || hit_t >= t_max) return false;

    out.t = hit_t;
    out.triangle = tri;
    out.normal = e1.cross(e2).normalized();
    if (out.normal.dot(dir) > 0.0) out.normal = -out.normal;  // face the ray
    return true;
  }

  const TriangleMesh* mesh_ = nullptr;
  std::vector<int> tri_order_;
  std::vector<Aabb> boxes_;
  std::vector<Eigen::Vector3d> centers_;
  std::vector<Node> nodes_;
};

/// Left-balanced kd-tree over 3D points for nearest-neighbor queries.
class KdTree3 {
 public:
  KdTree3() = default;

  explicit KdTree3(const std::vector<Eigen::Vector3d>& points) : points_(points) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!order_.empty()) build(0, order_.size(), 0);
  }

  bool empty() const { return order_.empty(); }
  size_t size() const { return order_.size(); }
  const Eigen::Vector3d& point(int i) const { return points_[i]; }

  struct Neighbor {
    int index = -1;
    double sq_distance = std::numeric_limits<double>::infinity();
  };

  /// Nearest point to q, optionally constrained to sq distance <= max_sq.
  Neighbor nearest(const Eigen::Vector3d& q,
                   double max_sq = std::numeric_limits<double>::infinity()) const {
    Neighbor best;
    best.sq_distance = max_sq;
    if (!order_.empty()) search(q, 0, order_.size(), 0, best);
    return best.index >= 0 ? best : Neighbor{};
  }

  /// Indices of all points within radius of q.
  std::vector<int> radius_search(const Eigen::Vector3d& q, double radius) const {
    std::vector<int> out;
    if (!order_.empty()) radius_collect(q, radius * radius, 0, order_.size(), 0, out);
    return out;
  }

 private:
  void build(size_t begin, size_t end, int depth) {
    if (end - begin <= 1) return;
    const int axis = depth % 3;
    const size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return points_[a][axis] < points_[b][axis]; });
    build(begin, mid, depth + 1);
    build(mid + 1, end, depth + 1);
  }

  void search(const Eigen::Vector3d& q, size_t begin, size_t end, int depth,
              Neighbor& best) const {
    if (begin >= end) return;
    const size_t mid = begin + (end - begin) / 2;
    const int idx = order_[mid];
    const double sq = (points_[idx] - q).squaredNorm();
    if (sq < best.sq_distance) {
      best.sq_distance = sq;
      best.index = idx;
    }
    const int axis = depth % 3;
    const double delta = q[axis] - points_[idx][axis];
    const bool left_first = delta < 0.0;
    if (left_first) {
      search(q, begin, mid, depth + 1, best);
      if (delta * delta < best.sq_distance) search(q, mid + 1, end, depth + 1, best);
    } else {
      search(q, mid + 1, end, depth + 1, best);
      if (delta * delta < best.sq_distance) search(q, begin, mid, depth + 1, best);
    }
  }

  void radius_collect(const Eigen::Vector3d& q, double sq_radius, size_t begin, size_t end,
                      int depth, std::vector<int>& out) const {
    if (begin >= end) return;
    const size_t mid = begin + (end - begin) / 2;
    const int idx = order_[mid];
    if ((points_[idx] - q).squaredNorm() <= sq_radius) out.push_back(idx);
    const int axis = depth % 3;
    const double delta = q[axis] - points_[idx][axis];
    if (delta < 0.0 || delta * delta <= sq_radius) radius_collect(q, sq_radius, begin, mid, depth + 1, out);
    if (delta >= 0.0 || delta * delta <= sq_radius) radius_collect(q, sq_radius, mid + 1, end, depth + 1, out);
  }

  std::vector<Eigen::Vector3d> points_;
  std::vector<int> order_;
};

}  // namespace navkit
