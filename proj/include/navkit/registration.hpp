/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "navkit/bvh.hpp"
#include "navkit/frame.hpp"
#include "navkit/shapes.hpp"

namespace navkit {

struct RegistrationFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateGeometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IcpConfig {
  int max_iterations = 50;
  double max_correspondence_mm = 10.0;   // annealed each iteration
  double anneal_factor = 0.7;
  double min_correspondence_mm = 2.0;
  double convergence_rms_change = 1e-3;  // mm
  size_t sample_count = 5000;
  double min_inlier_fraction = 0.2;
};

struct RegistrationResult {
  RigidTransform transform;
  double rms = 0.0;
  double inlier_fraction = 0.0;
  int iterations = 0;
  // (before, after) point-to-plane objective per accepted iteration, evaluated
  // on that iteration's correspondence set
  std::vector<std::pair<double, double>> objective_steps;
};

/// Closed-form rigid fit between corresponding clouds (the metal-ball style
/// alignment). Throws DegenerateGeometry for collinear input.
inline RegistrationResult fit_corresponding(const PointCloud& src, const PointCloud& dst) {
  if (src.size() != dst.size() || src.size() < 3)
    throw std::invalid_argument("fit_corresponding: need equal-length clouds of >= 3 points");
  const auto fit = fit_rigid(src.points, dst.points);
  if (!fit) throw DegenerateGeometry("fit_corresponding: degenerate point configuration");
  RegistrationResult result;
  result.transform = fit->transform;
  result.rms = fit->rms;
  result.inlier_fraction = 1.0;
  return result;
}

namespace detail {

struct PcaFrame {
  Eigen::Vector3d centroid;
  Eigen::Matrix3d axes;  // columns, descending eigenvalue
  Eigen::Vector3d eigenvalues;
};

inline PcaFrame frame_from_moments(const Eigen::Vector3d& centroid, Eigen::Matrix3d cov,
                                   const std::function<double(const Eigen::Vector3d&)>& skew) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  if (eig.eigenvalues()(1) <= 1e-9 * std::max(1.0, eig.eigenvalues()(2)))
    throw DegenerateGeometry("pca: rank-deficient covariance");

  PcaFrame frame;
  frame.centroid = centroid;
  // descending order
  frame.axes.col(0) = eig.eigenvectors().col(2);
  frame.axes.col(1) = eig.eigenvectors().col(1);
  frame.axes.col(2) = eig.eigenvectors().col(0);
  frame.eigenvalues = {eig.eigenvalues()(2), eig.eigenvalues()(1), eig.eigenvalues()(0)};

  // third-moment sign disambiguation: point each axis toward positive skew
  for (int a = 0; a < 2; ++a) {
    if (skew(frame.axes.col(a)) < 0.0) frame.axes.col(a) = -frame.axes.col(a);
  }
  // right-handed completion fixes the last axis
  frame.axes.col(2) = frame.axes.col(0).cross(frame.axes.col(1));
  return frame;
}

inline PcaFrame pca_frame(const std::vector<Eigen::Vector3d>& points) {
  if (points.size() < 3) throw DegenerateGeometry("pca: too few points");
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : points) c += p;
  c /= double(points.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) cov += (p - c) * (p - c).transpose();
  cov /= double(points.size());
  return frame_from_moments(c, cov, [&](const Eigen::Vector3d& e) {
    double s = 0.0;
    for (const auto& p : points) {
      const double x = (p - c).dot(e);
      s += x * x * x;
    }
    return s;
  });
}

/// Exact area-weighted surface moments of a mesh: no sampling noise, so two
/// copies of the same surface produce identical frames. Second moments use the
/// closed-form triangle integral; skew uses the area-weighted centroid rule.
inline PcaFrame pca_frame(const TriangleMesh& mesh) {
  if (mesh.triangles.size() < 2) throw DegenerateGeometry("pca: too few triangles");
  double area = 0.0;
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]],
                          &d = mesh.vertices[t[2]];
    const double tri_area = 0.5 * (b - a).cross(d - a).norm();
    area += tri_area;
    c += tri_area * (a + b + d) / 3.0;
  }
  if (area <= 0.0) throw DegenerateGeometry("pca: degenerate mesh");
  c /= area;

  Eigen::Matrix3d second = Eigen::Matrix3d::Zero();
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d a = mesh.vertices[t[0]] - c, b = mesh.vertices[t[1]] - c,
                          d = mesh.vertices[t[2]] - c;
    const double tri_area = 0.5 * (b - a).cross(d - a).norm();
    const Eigen::Vector3d s = a + b + d;
    second += (tri_area / 12.0) *
              (a * a.transpose() + b * b.transpose() + d * d.transpose() + s * s.transpose());
  }
  second /= area;

  return frame_from_moments(c, second, [&](const Eigen::Vector3d& e) {
    double s = 0.0;
    for (const auto& t : mesh.triangles) {
      const Eigen::Vector3d &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]],
                            &d = mesh.vertices[t[2]];
      const double tri_area = 0.5 * (b - a).cross(d - a).norm();
      const double x = ((a + b + d) / 3.0 - c).dot(e);
      s += tri_area * x * x * x;
    }
    return s;
  });
}

inline std::vector<Eigen::Vector3d> subsample(const std::vector<Eigen::Vector3d>& points,
                                              size_t count, uint64_t seed = 0x5eed) {
  if (points.size() <= count) return points;
  std::vector<Eigen::Vector3d> out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  const double stride = double(points.size()) / double(count);
  for (size_t i = 0; i < count; ++i) {
    const size_t lo = size_t(i * stride);
    const size_t hi = std::min(points.size() - 1, size_t((i + 1) * stride) - 1);
    std::uniform_int_distribution<size_t> pick(lo, std::max(lo, hi));
    out.push_back(points[pick(rng)]);
  }
  return out;
}

}  // namespace detail

namespace detail {

inline RigidTransform best_flip_hypothesis(const PcaFrame& fs, const PcaFrame& fd,
                                           const std::vector<Eigen::Vector3d>& probes,
                                           const std::vector<Eigen::Vector3d>& target) {
  const KdTree3 tree(target);
  static const Eigen::Vector3d kFlips[4] = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  RigidTransform best;
  double best_rms = std::numeric_limits<double>::infinity();
  for (const auto& flip : kFlips) {
    RigidTransform t;
    t.rotation = fd.axes * flip.asDiagonal() * fs.axes.transpose();
    t.translation = fd.centroid - t.rotation * fs.centroid;
    double sq = 0.0;
    for (const auto& p : probes) sq += tree.nearest(t * p).sq_distance;
    const double rms = std::sqrt(sq / double(probes.size()));
    if (rms < best_rms) {
      best_rms = rms;
      best = t;
    }
  }
  return best;
}

}  // namespace detail

/// Automatic coarse alignment: centroids plus principal axes with third-moment
/// sign disambiguation; the best of the four proper axis-sign hypotheses by
/// RMS nearest-neighbor distance wins. Mesh inputs use exact surface moments.
inline RigidTransform coarse_align(const std::vector<Eigen::Vector3d>& src,
                                   const std::vector<Eigen::Vector3d>& dst) {
  return detail::best_flip_hypothesis(detail::pca_frame(src), detail::pca_frame(dst),
                                      detail::subsample(src, 1500), dst);
}

inline RigidTransform coarse_align(const TriangleMesh& src, const TriangleMesh& dst) {
  if (src.empty() || dst.empty()) throw std::invalid_argument("coarse_align: empty mesh");
  return detail::best_flip_hypothesis(detail::pca_frame(src), detail::pca_frame(dst),
                                      shapes::sample_surface(src, 2.0, 2).points,
                                      shapes::sample_surface(dst, 10.0, 3).points);
}

inline RigidTransform coarse_align(const TriangleMesh& src, const PointCloud& dst) {
  if (src.empty() || dst.empty()) throw std::invalid_argument("coarse_align: empty input");
  return detail::best_flip_hypothesis(detail::pca_frame(src), detail::pca_frame(dst.points),
                                      shapes::sample_surface(src, 2.0, 2).points, dst.points);
}

/// Covariance normals for a raw cloud (k nearest neighbors). No global
/// orientation: point-to-plane residuals are sign-agnostic.
inline void estimate_cloud_normals(PointCloud& cloud, int k = 12) {
  const KdTree3 tree(cloud.points);
  cloud.normals.assign(cloud.size(), Eigen::Vector3d::UnitZ());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < long(cloud.size()); ++i) {
    // gather k nearest by expanding radius search
    const Eigen::Vector3d& p = cloud.points[i];
    std::vector<int> idx;
    double radius = 2.0;
    for (int attempt = 0; attempt < 8 && int(idx.size()) < k + 1; ++attempt) {
      idx = tree.radius_search(p, radius);
      radius *= 2.0;
    }
    if (int(idx.size()) < 4) continue;
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int j : idx) c += cloud.points[j];
    c /= double(idx.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : idx) cov += (cloud.points[j] - c) * (cloud.points[j] - c).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
    eig.computeDirect(cov);
    cloud.normals[i] = eig.eigenvectors().col(0);
  }
}

/// Point-to-plane ICP: iterate nearest-neighbor correspondences against the
/// destination within an annealed distance gate, solve the small-angle 6x6
/// normal equations, and damp any step that would raise the objective on the
/// current correspondence set (halving up to 5 times).
inline RegistrationResult icp_point_to_plane(const std::vector<Eigen::Vector3d>& src_points,
                                             const PointCloud& dst,
                                             const RigidTransform& init,
                                             const IcpConfig& config = {}) {
  if (src_points.empty() || dst.empty())
    throw std::invalid_argument("icp_point_to_plane: empty input");
  PointCloud target = dst;
  if (!target.has_normals()) estimate_cloud_normals(target);

  const KdTree3 tree(target.points);
  const auto samples = detail::subsample(src_points, config.sample_count);

  RegistrationResult result;
  result.transform = init;
  double max_dist = config.max_correspondence_mm;
  double prev_rms = std::numeric_limits<double>::infinity();

  struct Corr {
    Eigen::Vector3d p;  // source point (source frame)
    Eigen::Vector3d q;  // matched target point
    Eigen::Vector3d n;  // target normal
  };
  std::vector<Corr> corr;
  corr.reserve(samples.size());

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    corr.clear();
    const RigidTransform t = result.transform;
    for (const auto& p : samples) {
      const Eigen::Vector3d moved = t * p;
      const auto nn = tree.nearest(moved, max_dist * max_dist);
      if (nn.index < 0) continue;
      corr.push_back({p, target.points[nn.index], target.normals[nn.index]});
    }
    result.inlier_fraction = double(corr.size()) / double(samples.size());
    if (corr.size() < 6) break;

    auto objective = [&](const RigidTransform& candidate) {
      double sq = 0.0;
      for (const auto& c : corr) {
        const double r = (candidate * c.p - c.q).dot(c.n);
        sq += r * r;
      }
      return sq;
    };

    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : corr) {
      const Eigen::Vector3d moved = t * c.p;
      const double r = (moved - c.q).dot(c.n);
      Eigen::Matrix<double, 6, 1> j;
      j.head<3>() = moved.cross(c.n);
      j.tail<3>() = c.n;
      h += j * j.transpose();
      g += r * j;
    }
    const Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(h);
    if (ldlt.info() != Eigen::Success || !h.fullPivLu().isInvertible())
      throw DegenerateGeometry("icp_point_to_plane: singular normal equations");
    Eigen::Matrix<double, 6, 1> twist = ldlt.solve(-g);

    const double before = objective(t);
    RigidTransform accepted = t;
    for (int halving = 0; halving <= 5; ++halving) {
      RigidTransform step;
      const Eigen::Vector3d omega = twist.head<3>();
      const double angle = omega.norm();
      step.rotation = angle > 1e-15
                          ? Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix()
                          : Eigen::Matrix3d::Identity();
      step.translation = twist.tail<3>();
      const RigidTransform candidate = (step * t).orthonormalized();
      if (objective(candidate) <= before || halving == 5) {
        accepted = candidate;
        break;
      }
      twist *= 0.5;
    }
    result.objective_steps.emplace_back(before, objective(accepted));
    result.transform = accepted;
    result.iterations = iter + 1;

    double sq = 0.0;
    for (const auto& c : corr) {
      const double r = (accepted * c.p - c.q).dot(c.n);
      sq += r * r;
    }
    result.rms = std::sqrt(sq / double(corr.size()));
    if (std::abs(prev_rms - result.rms) < config.convergence_rms_change) break;
    prev_rms = result.rms;
    max_dist = std::max(config.min_correspondence_mm, max_dist * config.anneal_factor);
  }

  if (result.inlier_fraction < config.min_inlier_fraction)
    throw RegistrationFailed("icp_point_to_plane: inlier fraction " +
                             std::to_string(result.inlier_fraction) + " below threshold");
  return result;
}

inline RegistrationResult icp_point_to_plane(const TriangleMesh& src, const PointCloud& dst,
                                             const RigidTransform& init,
                                             const IcpConfig& config = {}) {
  return icp_point_to_plane(shapes::sample_surface(src, 10.0, 4).points, dst, init, config);
}

/// Pre-operative surface onto the reconstructed (tool-frame) surface:
/// automatic PCA seed (or caller-provided initial transform) followed by
/// point-to-plane ICP. The result is the image-to-tool transform.
inline RegistrationResult register_preop_to_tool(const TriangleMesh& preop,
                                                 const TriangleMesh& reconstructed,
                                                 const IcpConfig& config = {},
                                                 const std::optional<RigidTransform>& init =
                                                     std::nullopt) {
  if (preop.empty() || reconstructed.empty())
    throw std::invalid_argument("register_preop_to_tool: empty surface");
  PointCloud dst = shapes::sample_surface(reconstructed, 10.0, 5);
  const RigidTransform seed = init ? *init : coarse_align(preop, dst);
  return icp_point_to_plane(preop, dst, seed, config);
}

}  // namespace navkit
