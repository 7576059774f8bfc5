/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "navkit/distortion.hpp"
#include "navkit/nelder_mead.hpp"
#include "navkit/registration.hpp"
#include "navkit/tracking.hpp"

namespace navkit {

struct InsufficientMarkers : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IdentificationConfig {
  int frame_count = 1000;           // cap on frames consumed from the input
  double smoothness_weight = 1.0;   // lambda; both terms are in mm
  int annulus_inner_px = 2;         // ring offsets beyond the blob radius
  int annulus_outer_px = 8;
  // inner-loop ICP: a loose gate floor keeps correspondences alive at wrong
  // parameter guesses so the objective stays informative away from the optimum
  IcpConfig icp{.max_iterations = 15,
                .max_correspondence_mm = 25.0,
                .min_correspondence_mm = 6.0,
                .convergence_rms_change = 5e-3,
                .sample_count = 4000,
                .min_inlier_fraction = 0.05};
  int max_evaluations_per_start = 500;
  int multistarts = 5;
  size_t skin_samples_per_frame = 120;
  size_t residual_samples = 4000;   // per-evaluation median subsample
  uint64_t seed = 0;
  // Physical marker thickness: sticker surfaces sit this far above the skin,
  // so marker points are projected down along their plane normal before the
  // smoothness fit. Without this the boundary step biases c1 by the lift.
  double marker_thickness_mm = 0.5;
  // Coarse seed mapping the marker-constellation frame into the image frame,
  // standing in for the manual pre-alignment of the clinical workflow. The
  // identification cloud covers one side of the head only, which defeats the
  // automatic principal-axis seed used for full reconstructions.
  std::optional<RigidTransform> reference_to_image_seed;
};

struct IdentificationStep {
  DistortionParams params;
  double correctness = 0.0;
  double smoothness = 0.0;
  double objective = 0.0;
};

struct IdentificationDiagnostics {
  std::vector<IdentificationStep> steps;
  double objective_at_zero = 0.0;
  double correctness_at_zero = 0.0;
  int total_evaluations = 0;
  bool converged = false;
};

struct IdentificationResult {
  DistortionParams params;
  IdentificationDiagnostics diagnostics;
};

struct IdentificationNotConverged : std::runtime_error {
  DistortionParams best_so_far;
  IdentificationNotConverged(const std::string& msg, DistortionParams best)
      : std::runtime_error(msg), best_so_far(std::move(best)) {}
};

/// One capture used for identification: the raw frame plus the sensor pose in
/// the marker-constellation frame (from tracking the skin markers).
struct IdentificationFrame {
  DepthFrame frame;
  RigidTransform sensor_to_reference;
  // pixel sets of the detected marker blobs (>= 4 per frame)
  std::vector<std::vector<std::pair<int, int>>> marker_blobs;
};

namespace detail {

inline uint64_t prep_seed(uint64_t seed, uint64_t index) {
  uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// pixel retained for the objective: unprojection direction, measured depth,
// orientation term 1 - cos(theta)
struct PixelRecord {
  Eigen::Vector3d ray;
  double depth;
  double one_minus_cos;
};

struct FramePrep {
  RigidTransform sensor_to_reference;
  std::vector<PixelRecord> skin;               // correctness subsample
  // per marker: retro-corrected marker points (fixed) and annulus skin pixels
  std::vector<std::vector<Eigen::Vector3d>> marker_points;
  std::vector<std::vector<PixelRecord>> annulus;
};

inline Eigen::Vector3d corrected_point(const PixelRecord& r, const DistortionParams& p) {
  const double corrected = r.depth - (p.c1 + p.c2 * r.depth + p.c3 * r.one_minus_cos);
  return r.ray * corrected;
}

inline double plane_fit_rms(const std::vector<Eigen::Vector3d>& pts) {
  if (pts.size() < 4) return 0.0;
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  c /= double(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
  eig.computeDirect(cov);
  return std::sqrt(std::max(0.0, eig.eigenvalues()(0) / double(pts.size())));
}

/// RMS residual of a local quadric height-field fit. Unlike a plane, the
/// quadric absorbs the skin's own curvature across the annulus, so the
/// residual isolates the depth step at the marker boundary.
inline double quadric_fit_rms(const std::vector<Eigen::Vector3d>& pts) {
  if (pts.size() < 8) return plane_fit_rms(pts);
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  c /= double(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
  eig.computeDirect(cov);
  const Eigen::Vector3d n = eig.eigenvectors().col(0);
  const Eigen::Vector3d e1 = eig.eigenvectors().col(2);
  const Eigen::Vector3d e2 = eig.eigenvectors().col(1);

  Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - c;
    const double x = d.dot(e1), y = d.dot(e2), z = d.dot(n);
    Eigen::Matrix<double, 6, 1> row;
    row << 1.0, x, y, x * x, x * y, y * y;
    ata += row * row.transpose();
    atb += row * z;
  }
  const Eigen::Matrix<double, 6, 1> beta = ata.ldlt().solve(atb);
  double sq = 0.0;
  for (const auto& p : pts) {
    const Eigen::Vector3d d = p - c;
    const double x = d.dot(e1), y = d.dot(e2), z = d.dot(n);
    Eigen::Matrix<double, 6, 1> row;
    row << 1.0, x, y, x * x, x * y, y * y;
    const double r = z - row.dot(beta);
    sq += r * r;
  }
  return std::sqrt(sq / double(pts.size()));
}

}  // namespace detail

/// Patient-specific identification of the depth-error parameters.
///
/// The objective J(C) = correctness(C) + lambda * smoothness(C) is minimized
/// by multistart Nelder-Mead within the parameter bounds:
///  - correctness: all frames corrected with C, skin pixels unprojected into
///    the constellation frame via the marker-derived poses, the merged cloud
///    registered to the pre-operative surface by point-to-plane ICP, and the
///    median point-to-surface distance taken;
///  - smoothness: per marker, one local quadric fitted jointly to the
///    retro-corrected marker pixels and the C-corrected skin pixels in the
///    surrounding annulus; the RMS deviation penalizes depth steps across the
///    material boundary while tolerating the skin's own curvature.
/// The origin is always a start, so the accepted optimum never scores worse
/// than no correction.
inline IdentificationResult identify_parameters(const std::vector<IdentificationFrame>& frames,
                                                const TriangleMesh& preop,
                                                const DistortionParams& retro_params,
                                                const IdentificationConfig& config = {}) {
  if (frames.empty()) throw std::invalid_argument("identify_parameters: no frames");
  const size_t frame_limit = std::min<size_t>(frames.size(), size_t(config.frame_count));

  // ---- one-time preparation ----
  std::vector<detail::FramePrep> prep(frame_limit);
#pragma omp parallel for schedule(dynamic)
  for (long fi = 0; fi < long(frame_limit); ++fi) {
    const IdentificationFrame& input = frames[fi];
    if (input.marker_blobs.size() < 4) continue;  // reported after the loop
    const DepthFrame& frame = input.frame;
    const auto& k = frame.intrinsics;
    detail::FramePrep& out = prep[fi];
    out.sensor_to_reference = input.sensor_to_reference;

    const NormalGrid normals = estimate_normals(frame);

    std::vector<uint8_t> marker_mask(frame.depth.size(), 0);
    for (const auto& blob : input.marker_blobs) {
      for (const auto& [u, v] : blob) marker_mask[frame.index(u, v)] = 1;
    }

    // skin subsample, deterministic per frame
    std::vector<detail::PixelRecord> skin_all;
    for (int v = 0; v < frame.height(); ++v) {
      for (int u = 0; u < frame.width(); ++u) {
        const size_t idx = frame.index(u, v);
        const float d = frame.depth[idx];
        if (!depth_valid(d) || marker_mask[idx]) continue;
        skin_all.push_back({pixel_ray(k, u, v), double(d),
                            1.0 - normals.incidence_cos(k, u, v)});
      }
    }
    std::mt19937_64 rng(detail::prep_seed(config.seed, uint64_t(fi)));
    if (skin_all.size() > config.skin_samples_per_frame) {
      std::shuffle(skin_all.begin(), skin_all.end(), rng);
      skin_all.resize(config.skin_samples_per_frame);
    }
    out.skin = std::move(skin_all);

    // marker points (retro-corrected once) and their annuli
    for (const auto& blob : input.marker_blobs) {
      std::vector<Eigen::Vector3d> marker_pts;
      double cu = 0.0, cv = 0.0;
      for (const auto& [u, v] : blob) {
        cu += u;
        cv += v;
        const float d = frame.depth_at(u, v);
        if (!depth_valid(d)) continue;
        const detail::PixelRecord rec{pixel_ray(k, u, v), double(d),
                                      1.0 - normals.incidence_cos(k, u, v)};
        marker_pts.push_back(detail::corrected_point(rec, retro_params));
      }
      if (config.marker_thickness_mm != 0.0 && marker_pts.size() >= 4) {
        // project the sticker surface down onto the skin level
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        for (const auto& p : marker_pts) c += p;
        c /= double(marker_pts.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (const auto& p : marker_pts) cov += (p - c) * (p - c).transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
        eig.computeDirect(cov);
        Eigen::Vector3d n = eig.eigenvectors().col(0);
        if (n.dot(c) > 0.0) n = -n;  // camera-facing
        for (auto& p : marker_pts) p -= n * config.marker_thickness_mm;
      }
      if (blob.empty()) continue;
      cu /= double(blob.size());
      cv /= double(blob.size());
      const double blob_radius = std::sqrt(double(blob.size()) / kPi);
      const double r_in = blob_radius + config.annulus_inner_px;
      const double r_out = blob_radius + config.annulus_outer_px;

      std::vector<detail::PixelRecord> ring;
      for (int v = int(cv - r_out); v <= int(cv + r_out + 1); ++v) {
        for (int u = int(cu - r_out); u <= int(cu + r_out + 1); ++u) {
          if (!frame.in_bounds(u, v)) continue;
          const double rr = std::hypot(u - cu, v - cv);
          if (rr < r_in || rr > r_out) continue;
          const size_t idx = frame.index(u, v);
          if (marker_mask[idx] || !depth_valid(frame.depth[idx])) continue;
          ring.push_back({pixel_ray(k, u, v), double(frame.depth[idx]),
                          1.0 - normals.incidence_cos(k, u, v)});
        }
      }
      out.marker_points.push_back(std::move(marker_pts));
      out.annulus.push_back(std::move(ring));
    }
  }
  for (size_t fi = 0; fi < frame_limit; ++fi) {
    if (frames[fi].marker_blobs.size() < 4) {
      throw InsufficientMarkers("identify_parameters: frame " + std::to_string(fi) +
                                " has fewer than 4 marker blobs");
    }
  }

  const PointCloud preop_samples = shapes::sample_surface(preop, 10.0, 17);
  const TriangleBvh preop_bvh(preop);

  // ---- objective ----
  IdentificationDiagnostics diagnostics;
  std::optional<RigidTransform> warm_start;

  auto evaluate = [&](const DistortionParams& params) -> IdentificationStep {
    IdentificationStep step;
    step.params = params;

    // correctness: merged corrected skin cloud in the constellation frame
    PointCloud cloud;
    for (const auto& f : prep) {
      for (const auto& rec : f.skin) {
        const Eigen::Vector3d p = detail::corrected_point(rec, params);
        if (!depth_valid(float(p.z()))) continue;
        cloud.points.push_back(f.sensor_to_reference * p);
      }
    }
    if (cloud.size() < 100) {
      step.correctness = 1e6;
      step.objective = 1e6;
      return step;
    }

    double correctness;
    try {
      const RigidTransform init =
          warm_start ? *warm_start
                     : (config.reference_to_image_seed
                            ? *config.reference_to_image_seed
                            : coarse_align(cloud.points, preop_samples.points));
      // registers the measured cloud onto the pre-op surface
      const auto reg = icp_point_to_plane(cloud.points, preop_samples, init, config.icp);
      warm_start = reg.transform;

      std::vector<double> residuals;
      const size_t stride = std::max<size_t>(1, cloud.size() / config.residual_samples);
      for (size_t i = 0; i < cloud.size(); i += stride) {
        residuals.push_back(preop_bvh.distance(reg.transform * cloud.points[i]));
      }
      correctness = median_iqr(residuals).median;
    } catch (const RegistrationFailed&) {
      correctness = 1e5;
    } catch (const DegenerateGeometry&) {
      correctness = 1e5;
    }
    step.correctness = correctness;

    // smoothness: joint plane fit across the marker/skin boundary
    double rms_sum = 0.0;
    size_t rms_count = 0;
    std::vector<Eigen::Vector3d> combined;
    for (const auto& f : prep) {
      for (size_t m = 0; m < f.marker_points.size(); ++m) {
        if (f.marker_points[m].size() < 4 || f.annulus[m].size() < 4) continue;
        combined = f.marker_points[m];
        for (const auto& rec : f.annulus[m]) {
          combined.push_back(detail::corrected_point(rec, params));
        }
        rms_sum += detail::quadric_fit_rms(combined);
        rms_count++;
      }
    }
    step.smoothness = rms_count > 0 ? rms_sum / double(rms_count) : 0.0;

    step.objective = step.correctness + config.smoothness_weight * step.smoothness;
    return step;
  };

  auto penalized = [&](const Eigen::VectorXd& x) -> double {
    DistortionParams p;
    p.c1 = std::clamp(x(0), -DistortionParams::kMaxC1, DistortionParams::kMaxC1);
    p.c2 = std::clamp(x(1), -DistortionParams::kMaxC2, DistortionParams::kMaxC2);
    p.c3 = std::clamp(x(2), -DistortionParams::kMaxC3, DistortionParams::kMaxC3);
    const double excess =
        std::abs(x(0) - p.c1) + std::abs(x(1) - p.c2) * 100.0 + std::abs(x(2) - p.c3);
    IdentificationStep step = evaluate(p);
    diagnostics.steps.push_back(step);
    diagnostics.total_evaluations++;
    return step.objective + 1e3 * excess;
  };

  // ---- multistart search; the origin seed is mandatory ----
  const IdentificationStep at_zero = evaluate(DistortionParams{});
  diagnostics.objective_at_zero = at_zero.objective;
  diagnostics.correctness_at_zero = at_zero.correctness;

  std::vector<Eigen::Vector3d> starts = {
      {0, 0, 0}, {10, 0, 0}, {-10, 0, 0}, {5, 0.01, 5}, {-5, -0.01, -5}};
  starts.resize(std::max(1, std::min<int>(config.multistarts, int(starts.size()))));

  Eigen::Vector3d best_x = Eigen::Vector3d::Zero();
  double best_value = at_zero.objective;
  bool any_converged = false;
  for (const auto& s : starts) {
    warm_start.reset();
    const auto run = nelder_mead(penalized, s, Eigen::Vector3d(2.0, 0.005, 2.0),
                                 config.max_evaluations_per_start, 2e-3);
    any_converged = any_converged || run.converged;
    if (run.value < best_value) {
      best_value = run.value;
      best_x = run.x;
    }
  }
  diagnostics.converged = any_converged;

  DistortionParams best;
  best.c1 = std::clamp(best_x(0), -DistortionParams::kMaxC1, DistortionParams::kMaxC1);
  best.c2 = std::clamp(best_x(1), -DistortionParams::kMaxC2, DistortionParams::kMaxC2);
  best.c3 = std::clamp(best_x(2), -DistortionParams::kMaxC3, DistortionParams::kMaxC3);

  if (!any_converged && best_value >= diagnostics.objective_at_zero - 1e-9) {
    throw IdentificationNotConverged(
        "identify_parameters: evaluation budget exhausted without improvement", best);
  }
  return {best, diagnostics};
}

/// Track the skin-marker constellation in each raw frame and assemble the
/// posed identification inputs. Frames where fewer than 4 markers match raise
/// InsufficientMarkers.
inline std::vector<IdentificationFrame> prepare_identification_frames(
    const std::vector<DepthFrame>& frames, const ToolDefinition& constellation,
    const DistortionParams& retro_params) {
  std::vector<IdentificationFrame> out;
  out.reserve(frames.size());
  for (size_t fi = 0; fi < frames.size(); ++fi) {
    const DepthFrame& frame = frames[fi];
    const auto blobs = detect_blobs(frame);
    std::vector<int> kept;
    const PointCloud centers = blob_centers_3d(blobs, frame, retro_params, &kept);
    const auto match = match_constellation(centers, constellation);
    if (!match || match->pairs.size() < 4) {
      throw InsufficientMarkers("frame " + std::to_string(fi) +
                                ": fewer than 4 constellation markers detected");
    }
    std::vector<Eigen::Vector3d> src, dst;
    IdentificationFrame ident;
    ident.frame = frame;
    for (const auto& [marker, center] : match->pairs) {
      src.push_back(constellation.marker_positions[marker]);
      dst.push_back(centers.points[center]);
      ident.marker_blobs.push_back(blobs[kept[center]].pixels);
    }
    const auto pose = fit_pose(src, dst, frame.timestamp_us);
    if (!pose) throw InsufficientMarkers("frame " + std::to_string(fi) + ": degenerate marker fit");
    // pose maps constellation -> sensor; identification wants sensor -> constellation
    ident.sensor_to_reference = pose->transform.inverse();
    out.push_back(std::move(ident));
  }
  return out;
}

}  // namespace navkit
