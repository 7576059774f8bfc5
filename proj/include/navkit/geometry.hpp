/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

namespace navkit {

constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double deg) { return deg * (kPi / 180.0); }
constexpr double rad2deg(double rad) { return rad * (180.0 / kPi); }

/// Rigid body transform in SE(3). Rotation is a proper orthonormal matrix,
/// translation is in millimetres. Composition applies the right operand first.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_axis_angle(const Eigen::Vector3d& axis, double angle_rad,
                                        const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
    RigidTransform out;
    out.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
    out.translation = t;
    return out;
  }

  static RigidTransform from_matrix(const Eigen::Matrix4d& m) {
    RigidTransform out;
    out.rotation = m.topLeftCorner<3, 3>();
    out.translation = m.topRightCorner<3, 1>();
    return out;
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  /// (a * b) applies b first, then a.
  RigidTransform operator*(const RigidTransform& b) const {
    RigidTransform out;
    out.rotation = rotation * b.rotation;
    out.translation = rotation * b.translation + translation;
    return out;
  }

  /// Rotate a direction vector, ignoring translation.
  Eigen::Vector3d rotate(const Eigen::Vector3d& v) const { return rotation * v; }

  /// Max abs deviation of rotation^T*rotation from identity plus |det - 1|.
  double orthonormality_error() const {
    Eigen::Matrix3d e = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    return e.cwiseAbs().maxCoeff() + std::abs(rotation.determinant() - 1.0);
  }

  bool is_rigid(double tol = 1e-9) const { return orthonormality_error() <= tol; }

  /// Nearest proper rotation by polar decomposition; use to contain drift
  /// accumulated over long composition chains.
  RigidTransform orthonormalized() const {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
      Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
      flip(2, 2) = -1.0;
      r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    return {r, translation};
  }
};

/// Angle of the relative rotation between two transforms, in degrees.
inline double rotation_angle_deg(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return rad2deg(std::acos(std::clamp(c, -1.0, 1.0)));
}

inline double rotation_angle_deg(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle_deg(a.rotation, b.rotation);
}

/// Pinhole camera model, AHAT-like 512x512 by default.
struct CameraIntrinsics {
  int width = 512;
  int height = 512;
  double fx = 256.0;
  double fy = 256.0;
  double cx = 256.0;
  double cy = 256.0;

  bool valid() const {
    return width > 0 && height > 0 && fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 &&
           cy < height;
  }
};

/// Unnormalized viewing ray through pixel (u, v); z component is 1, so a point
/// at depth d along this ray is d * pixel_ray(...).
inline Eigen::Vector3d pixel_ray(const CameraIntrinsics& k, double u, double v) {
  return {(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
}

/// Back-project pixel (u, v) at depth d (mm, camera-frame z) to a 3D point.
inline Eigen::Vector3d unproject(const CameraIntrinsics& k, double u, double v, double d) {
  return d * pixel_ray(k, u, v);
}

/// Project a camera-frame point to pixel coordinates. Points at or behind the
/// camera plane (z <= 0) have no projection.
inline std::optional<Eigen::Vector2d> project(const CameraIntrinsics& k,
                                              const Eigen::Vector3d& p) {
  if (p.z() <= 0.0) return std::nullopt;
  return Eigen::Vector2d{k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

/// Least-squares rigid fit (Kabsch/Umeyama): finds (R, t) minimizing
/// sum |R*src[i] + t - dst[i]|^2 over >= 3 non-degenerate correspondences.
/// Reflections are rejected by flipping the smallest singular direction.
/// Returns nullopt for collinear or rank-deficient configurations.
struct RigidFit {
  RigidTransform transform;
  double rms = 0.0;
};

inline std::optional<RigidFit> fit_rigid(const std::vector<Eigen::Vector3d>& src,
                                         const std::vector<Eigen::Vector3d>& dst) {
  const size_t n = src.size();
  if (n < 3 || dst.size() != n) return std::nullopt;

  Eigen::Vector3d c_src = Eigen::Vector3d::Zero();
  Eigen::Vector3d c_dst = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    c_src += src[i];
    c_dst += dst[i];
  }
  c_src /= double(n);
  c_dst /= double(n);

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    cov += (dst[i] - c_dst) * (src[i] - c_src).transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // Collinear points leave the second singular value at zero; the rotation
  // about the line is then unobservable.
  const double scale = svd.singularValues()(0);
  if (scale <= 0.0 || svd.singularValues()(1) <= 1e-9 * scale) return std::nullopt;

  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;

  RigidFit fit;
  fit.transform.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  fit.transform.translation = c_dst - fit.transform.rotation * c_src;

  double sq = 0.0;
  for (size_t i = 0; i < n; ++i) sq += (fit.transform * src[i] - dst[i]).squaredNorm();
  fit.rms = std::sqrt(sq / double(n));
  return fit;
}

}  // namespace navkit
