/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "navkit/frame.hpp"

namespace navkit::shapes {

/// Icosphere with outward winding, radius r, centered at origin.
/// subdivisions = 4 gives 5120 triangles.
inline TriangleMesh icosphere(double r, int subdivisions = 4) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> tris = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[a] + verts[b]).normalized());
      const int idx = int(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(tris.size() * 4);
    for (const auto& t : tris) {
      const int a = mid(t[0], t[1]), b = mid(t[1], t[2]), c = mid(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    tris = std::move(next);
  }

  TriangleMesh mesh;
  mesh.vertices.reserve(verts.size());
  for (const auto& v : verts) mesh.vertices.push_back(v * r);
  mesh.triangles = std::move(tris);
  return mesh;
}

/// Closed hemisphere (dome plus base disc), radius r, flat side down (y = 0),
/// dome apex at +y. Longest extent is the base diameter 2r.
inline TriangleMesh hemisphere(double r, int rings = 24, int segments = 48) {
  TriangleMesh mesh;
  // rings of latitude from equator (y=0) to apex
  for (int i = 0; i <= rings; ++i) {
    const double lat = (kPi / 2.0) * double(i) / double(rings);
    const double y = r * std::sin(lat);
    const double rad = r * std::cos(lat);
    for (int j = 0; j < segments; ++j) {
      const double lon = 2.0 * kPi * double(j) / double(segments);
      mesh.vertices.emplace_back(rad * std::cos(lon), y, rad * std::sin(lon));
    }
  }
  auto ring_vertex = [&](int i, int j) { return i * segments + (j % segments); };
  for (int i = 0; i < rings; ++i) {
    for (int j = 0; j < segments; ++j) {
      const int a = ring_vertex(i, j), b = ring_vertex(i, j + 1);
      const int c = ring_vertex(i + 1, j), d = ring_vertex(i + 1, j + 1);
      mesh.triangles.push_back({a, c, b});
      mesh.triangles.push_back({b, c, d});
    }
  }
  // base disc fan, outward = -y
  const int center = int(mesh.vertices.size());
  mesh.vertices.emplace_back(0, 0, 0);
  for (int j = 0; j < segments; ++j) {
    mesh.triangles.push_back({center, ring_vertex(0, j), ring_vertex(0, j + 1)});
  }
  return mesh;
}

/// Regular tetrahedron with edge length `edge`, one face down (y = 0).
inline TriangleMesh triangular_pyramid(double edge) {
  const double h = edge * std::sqrt(2.0 / 3.0);    // apex height
  const double rc = edge / std::sqrt(3.0);         // base circumradius
  TriangleMesh mesh;
  for (int j = 0; j < 3; ++j) {
    const double a = 2.0 * kPi * j / 3.0 + kPi / 2.0;
    mesh.vertices.emplace_back(rc * std::cos(a), 0.0, rc * std::sin(a));
  }
  mesh.vertices.emplace_back(0.0, h, 0.0);
  mesh.triangles = {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {2, 0, 3}};
  return mesh;
}

/// Square frustum: base edge `base`, top edge base/2, height 0.6*base,
/// base down (y = 0). Longest edge is the base edge.
inline TriangleMesh frustum_pyramid(double base) {
  const double top = 0.5 * base;
  const double h = 0.6 * base;
  TriangleMesh mesh;
  const double b = base / 2.0, t = top / 2.0;
  // base ring then top ring, counter-clockwise seen from +y
  mesh.vertices = {{-b, 0, -b}, {b, 0, -b}, {b, 0, b},  {-b, 0, b},
                   {-t, h, -t}, {t, h, -t}, {t, h, t},  {-t, h, t}};
  mesh.triangles = {
      {0, 1, 2}, {0, 2, 3},              // base (outward -y)
      {4, 6, 5}, {4, 7, 6},              // top (outward +y)
      {0, 5, 1}, {0, 4, 5},              // side -z
      {1, 6, 2}, {1, 5, 6},              // side +x
      {2, 7, 3}, {2, 6, 7},              // side +z
      {3, 4, 0}, {3, 7, 4}};             // side -x
  return mesh;
}

/// Rectangular patch in the z = 0 plane, centered at origin, normal +z,
/// subdivided nx x ny cells.
inline TriangleMesh plane_patch(double size_x, double size_y, int nx = 10, int ny = 10) {
  TriangleMesh mesh;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      mesh.vertices.emplace_back(size_x * (double(i) / nx - 0.5),
                                 size_y * (double(j) / ny - 0.5), 0.0);
    }
  }
  auto at = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      mesh.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      mesh.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
  return mesh;
}

/// Scan-like head: displaced icosphere with nose, brow, eye sockets and a
/// slightly asymmetric cheek so principal-axis signs are observable.
/// `height` is the total vertical extent in mm (default matches an adult
/// head phantom). Head frame: +y up, +z out of the face.
inline TriangleMesh head(double height = 180.0, int subdivisions = 5) {
  TriangleMesh mesh = icosphere(1.0, subdivisions);

  auto bump = [](const Eigen::Vector3d& dir, const Eigen::Vector3d& at, double width) {
    const double ang = std::acos(std::clamp(dir.dot(at), -1.0, 1.0));
    return std::exp(-(ang * ang) / (width * width));
  };
  const Eigen::Vector3d nose = Eigen::Vector3d(0.0, -0.22, 1.0).normalized();
  const Eigen::Vector3d eye_l = Eigen::Vector3d(-0.34, 0.10, 0.92).normalized();
  const Eigen::Vector3d eye_r = Eigen::Vector3d(0.34, 0.10, 0.92).normalized();
  const Eigen::Vector3d brow = Eigen::Vector3d(0.0, 0.34, 0.94).normalized();
  const Eigen::Vector3d chin = Eigen::Vector3d(0.0, -0.85, 0.55).normalized();
  const Eigen::Vector3d cheek = Eigen::Vector3d(0.55, -0.25, 0.76).normalized();

  for (auto& v : mesh.vertices) {
    const Eigen::Vector3d dir = v;  // unit sphere vertex
    // base ellipsoid
    const Eigen::Vector3d scaled(dir.x() / 0.78, dir.y() / 1.0, dir.z() / 0.88);
    double r = 1.0 / scaled.norm();
    r += 0.17 * bump(dir, nose, 0.20);
    r -= 0.045 * bump(dir, eye_l, 0.16);
    r -= 0.045 * bump(dir, eye_r, 0.16);
    r += 0.03 * bump(dir, brow, 0.35);
    r -= 0.06 * bump(dir, chin, 0.30);
    r += 0.035 * bump(dir, cheek, 0.28);
    v = dir * r;
  }

  // normalize vertical extent to `height`
  double ymin = 1e30, ymax = -1e30;
  for (const auto& v : mesh.vertices) {
    ymin = std::min(ymin, v.y());
    ymax = std::max(ymax, v.y());
  }
  const double s = height / (ymax - ymin);
  for (auto& v : mesh.vertices) v *= s;
  return mesh;
}

/// Named test-shape factory covering the evaluation catalogue.
/// `size_mm` is the longest-extent convention used per shape above.
inline TriangleMesh make_shape(const std::string& name, double size_mm) {
  if (name == "head") return head(size_mm);
  if (name == "triangular_pyramid") return triangular_pyramid(size_mm);
  if (name == "frustum_pyramid") return frustum_pyramid(size_mm);
  if (name == "hemisphere") return hemisphere(size_mm / 2.0);
  if (name == "sphere") return icosphere(size_mm / 2.0);
  throw std::invalid_argument("unknown shape: " + name);
}

/// Area-weighted uniform surface sampling with outward normals.
/// density is points per cm^2; the sample count is round(area_cm2 * density),
/// at least min_count.
inline PointCloud sample_surface(const TriangleMesh& mesh, double density_per_cm2 = 10.0,
                                 uint64_t seed = 0, size_t min_count = 1) {
  PointCloud cloud;
  if (mesh.triangles.empty()) return cloud;

  std::vector<double> cumulative(mesh.triangles.size());
  double area = 0.0;
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const Eigen::Vector3d e1 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
    const Eigen::Vector3d e2 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
    area += 0.5 * e1.cross(e2).norm();
    cumulative[i] = area;
  }
  const double area_cm2 = area / 100.0;
  const size_t count = std::max(min_count, size_t(std::llround(area_cm2 * density_per_cm2)));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  cloud.points.reserve(count);
  cloud.normals.reserve(count);
  for (size_t k = 0; k < count; ++k) {
    const double pick = uni(rng) * area;
    const size_t i = std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
                     cumulative.begin();
    const auto& t = mesh.triangles[std::min(i, mesh.triangles.size() - 1)];
    double a = uni(rng), b = uni(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const Eigen::Vector3d& v0 = mesh.vertices[t[0]];
    const Eigen::Vector3d p = v0 + a * (mesh.vertices[t[1]] - v0) + b * (mesh.vertices[t[2]] - v0);
    cloud.points.push_back(p);
    const Eigen::Vector3d n =
        (mesh.vertices[t[1]] - v0).cross(mesh.vertices[t[2]] - v0).normalized();
    cloud.normals.push_back(n);
  }
  return cloud;
}

}  // namespace navkit::shapes
