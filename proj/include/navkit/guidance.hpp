/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The navkit authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "navkit/fusion.hpp"
#include "navkit/identification.hpp"
#include "navkit/registration.hpp"
#include "navkit/sensor_sim.hpp"
#include "navkit/stats.hpp"

namespace navkit {

/// Planned insertion path in the pre-operative image frame.
struct PlannedPath {
  Eigen::Vector3d entry_mm;
  Eigen::Vector3d target_mm;

  Eigen::Vector3d direction() const { return (target_mm - entry_mm).normalized(); }
  bool valid() const { return (target_mm - entry_mm).norm() > 1e-9; }
};

struct GuidanceError {
  double entry_error_mm = 0.0;
  double orientation_error_deg = 0.0;
};

/// The intra-operative pose chain: image -> tool -> sensor -> rig -> world.
inline RigidTransform image_to_world(const RigidTransform& t_rig_world,
                                     const RigidTransform& t_ahat_rig,
                                     const RigidTransform& t_tool_ahat,
                                     const RigidTransform& t_img_tool) {
  return t_rig_world * t_ahat_rig * t_tool_ahat * t_img_tool;
}

/// Both path endpoints through the chain output.
inline PlannedPath path_to_world(const PlannedPath& path, const RigidTransform& t_img_world) {
  return {t_img_world * path.entry_mm, t_img_world * path.target_mm};
}

/// Entry distance and axis-angle between directions.
inline GuidanceError guidance_error(const PlannedPath& planned_world,
                                    const Eigen::Vector3d& achieved_entry,
                                    const Eigen::Vector3d& achieved_direction) {
  const double len = achieved_direction.norm();
  if (len < 1e-12) throw std::invalid_argument("guidance_error: zero-length direction");
  GuidanceError err;
  err.entry_error_mm = (achieved_entry - planned_world.entry_mm).norm();
  const double c = planned_world.direction().dot(achieved_direction / len);
  err.orientation_error_deg = rad2deg(std::acos(std::clamp(c, -1.0, 1.0)));
  return err;
}

/// Insertion paths spread over the head's upper surface, aimed toward the
/// interior. Entries come from casting inward from a fan of directions.
inline std::vector<PlannedPath> default_insertion_paths(const TriangleMesh& head_image_frame,
                                                        int count = 9) {
  const TriangleBvh bvh(head_image_frame);
  std::vector<PlannedPath> paths;
  for (int i = 0; i < count; ++i) {
    const double az = -0.9 + 1.8 * double(i % 3) / 2.0;          // across the head
    const double el = 0.45 + 0.4 * double(i / 3) / 2.0;          // up the forehead
    // small x offset keeps rays off the mesh symmetry plane (shared-edge misses)
    const Eigen::Vector3d dir = Eigen::Vector3d(az * 0.5 + 0.013, el, 1.0).normalized();
    const Eigen::Vector3d origin = dir * 1e4;
    const auto hit = bvh.raycast(origin, -dir);
    if (!hit) continue;
    PlannedPath path;
    path.entry_mm = origin - dir * hit->t;
    path.target_mm = path.entry_mm * 0.25;  // toward the ventricle region
    paths.push_back(path);
  }
  return paths;
}

struct StudyConfig {
  double sigma_depth_mm = 1.0;        // sensor noise on all captures
  double operator_sigma_pos_mm = 1.0;
  double operator_sigma_deg = 1.0;
  DistortionParams injected_skin{7.5, 0.002, 1.5, "skin"};
  DistortionParams retro{3.0, 0.001, 1.0, "retro"};  // pre-calibrated
  int identification_frames = 40;
  int orbit_frames = 90;
  double voxel_size_mm = 1.0;
  IdentificationConfig identification;
  IcpConfig registration;
  // Stand-in for the clinician's coarse manual alignment of the pre-op image
  // with the reconstruction; when unset, the study derives a deterministic
  // 8 mm / 8 deg perturbation of the scene truth. The automatic principal-axis
  // seed is unreliable on partially covered reconstructions.
  std::optional<RigidTransform> registration_seed;
  uint64_t seed = 0;

  static StudyConfig noiseless() {
    StudyConfig c;
    c.sigma_depth_mm = 0.0;
    c.operator_sigma_pos_mm = 0.0;
    c.operator_sigma_deg = 0.0;
    c.injected_skin = {};
    c.retro = {};
    return c;
  }
};

struct PathRecord {
  PlannedPath planned_image;
  std::optional<GuidanceError> error;  // empty when a stage failed
  std::string failure;
};

struct StudyResult {
  std::vector<PathRecord> records;
  double mean_entry_mm = 0.0;
  double sd_entry_mm = 0.0;
  double mean_orientation_deg = 0.0;
  double sd_orientation_deg = 0.0;
  DistortionParams identified;
  double registration_rms = 0.0;
};

/// The phantom-on-platform study scene: head with forehead markers for
/// identification, ring tool on the platform for tracking, face turned toward
/// the sensor side (+z hemisphere of the world).
struct StudyScene {
  sim::SceneDescription scene;
  ToolDefinition skin_constellation;
  ToolDefinition reference_tool;
};

inline StudyScene make_study_scene(const StudyConfig& config) {
  StudyScene out;
  out.scene.head_mesh = shapes::head(180.0, 4);
  out.scene.head_pose = RigidTransform::from_axis_angle({0, 1, 0}, deg2rad(180.0), {0, 0, 400});
  out.scene.head_material.name = "skin";
  out.scene.head_material.ir_reflectivity = 900.0;
  out.scene.head_material.distortion = config.injected_skin;
  out.scene.head_material.depth_noise_sigma = config.sigma_depth_mm;
  out.scene.retro_material.distortion = config.retro;
  out.scene.retro_material.depth_noise_sigma = config.sigma_depth_mm;

  const TriangleBvh bvh(out.scene.head_mesh);
  for (const Eigen::Vector3d& dir :
       {Eigen::Vector3d(0.33, 0.30, 1), Eigen::Vector3d(-0.25, 0.32, 1),
        Eigen::Vector3d(0.07, 0.60, 1), Eigen::Vector3d(-0.06, 0.10, 1)}) {
    const auto m = sim::place_disc_on_mesh(out.scene.head_mesh, bvh, dir.normalized(), 10.0);
    if (m) out.scene.skin_markers.push_back(*m);
  }
  out.skin_constellation.name = "forehead";
  out.skin_constellation.marker_diameter_mm = 10.0;
  for (const auto& m : out.scene.skin_markers) {
    out.skin_constellation.marker_positions.push_back(m.center);
  }

  // headframe plate above the forehead, markers facing the surgeon's side
  out.reference_tool.name = "headframe";
  out.reference_tool.marker_positions = {
      {-39, -46, 4}, {52, 59, -9}, {21, 22, -14}, {25, -45, 7}, {-57, 8, 12}};
  out.reference_tool.marker_diameter_mm = 14.0;
  out.scene.tool = out.reference_tool;
  RigidTransform plate;
  plate.rotation = Eigen::Quaterniond::FromTwoVectors(
                       Eigen::Vector3d::UnitZ(), Eigen::Vector3d(0, 0.55, -1).normalized())
                       .toRotationMatrix();
  plate.translation = {0, 150, 430};
  out.scene.tool_pose = plate;
  return out;
}

/// End-to-end simulated k-wire study: identify the patient parameters, build
/// the reconstruction-based registration, then for each planned path track the
/// reference tool in a fresh frame, compose the display chain, apply operator
/// hand noise to the displayed path and measure against ground truth.
inline StudyResult simulate_insertion_study(const StudyScene& study,
                                            const std::vector<PlannedPath>& paths,
                                            const StudyConfig& config) {
  const CameraIntrinsics intrinsics;  // AHAT-like
  StudyResult result;
  std::mt19937_64 operator_rng(sim::derive_seed(config.seed, 0xFACE));
  std::normal_distribution<double> normal01(0.0, 1.0);

  // ---- stage 1: patient-specific identification ----
  {
    const auto poses =
        sim::random_pose_trajectory({0, 0, 400}, {0, 0, -1}, size_t(config.identification_frames),
                                    280.0, 550.0, sim::derive_seed(config.seed, 1), 28.0, 10.0);
    const auto rendered = sim::render_sequence(study.scene, poses, intrinsics,
                                               sim::derive_seed(config.seed, 2));
    std::vector<DepthFrame> frames;
    frames.reserve(rendered.size());
    for (const auto& pf : rendered) frames.push_back(pf.frame);

    IdentificationConfig ident = config.identification;
    ident.frame_count = config.identification_frames;
    if (!ident.reference_to_image_seed) {
      // stand-in for the clinician's coarse manual alignment: the constellation
      // frame is the head frame here, perturbed like a hand alignment would be
      ident.reference_to_image_seed =
          RigidTransform::from_axis_angle({0.2, 1, -0.1}, deg2rad(6.0), {7, -5, 6});
    }
    const auto ident_frames =
        prepare_identification_frames(frames, study.skin_constellation, config.retro);
    result.identified =
        identify_parameters(ident_frames, study.scene.head_mesh, config.retro, ident).params;
  }

  // ---- stage 2: reconstruction and pre-operative registration ----
  RigidTransform t_img_tool;
  {
    // hand-held scan of the face side at varying depths and angles
    const auto scan_poses = sim::random_pose_trajectory(
        {0, 20, 400}, {0, 0.35, -1}, size_t(config.orbit_frames), 300.0, 500.0,
        sim::derive_seed(config.seed, 30), 32.0, 20.0);
    const auto rendered =
        sim::render_sequence(study.scene, scan_poses, intrinsics, sim::derive_seed(config.seed, 3));
    std::vector<TrackedFrame> tracked;
    std::optional<RoiBox> roi;
    for (const auto& pf : rendered) {
      const auto tools = track(pf.frame, {study.reference_tool}, config.retro);
      tracked.push_back({pf.frame, tools[0].pose});
      if (!roi && tools[0].pose) {
        const auto seed_px =
            project(intrinsics, pf.sensor_pose.inverse() * (study.scene.head_pose *
                                                            Eigen::Vector3d(0, 0, 0)));
        if (seed_px && pf.frame.in_bounds(int(seed_px->x()), int(seed_px->y())) &&
            depth_valid(pf.frame.depth_at(int(seed_px->x()), int(seed_px->y())))) {
          roi = roi_from_frame(pf.frame, *tools[0].pose, int(seed_px->x()), int(seed_px->y()));
        }
      }
    }
    if (!roi) throw RegistrationFailed("study: no frame yielded an ROI");

    ReconstructOptions recon_opts;
    recon_opts.voxel_size = config.voxel_size_mm;
    const TriangleMesh recon = reconstruct(tracked, result.identified, *roi, recon_opts);

    RigidTransform seed;
    if (config.registration_seed) {
      seed = *config.registration_seed;
    } else {
      std::mt19937_64 seed_rng(sim::derive_seed(config.seed, 0xA116));
      std::uniform_real_distribution<double> uni(-1.0, 1.0);
      const Eigen::Vector3d axis =
          Eigen::Vector3d(uni(seed_rng), uni(seed_rng), uni(seed_rng)).normalized();
      const Eigen::Vector3d shift(uni(seed_rng), uni(seed_rng), uni(seed_rng));
      seed = RigidTransform::from_axis_angle(axis, deg2rad(8.0), shift.normalized() * 8.0) *
             study.scene.true_image_to_tool();
    }
    const auto reg =
        register_preop_to_tool(study.scene.head_mesh, recon, config.registration, seed);
    t_img_tool = reg.transform;
    result.registration_rms = reg.rms;
  }

  // ---- stage 3: per-path intra-operative guidance ----
  // elevated surgeon-style viewpoints keep the ring markers near 50 deg
  // incidence, where planar discs still track well
  const auto view_poses =
      sim::random_pose_trajectory({0, 0, 400}, {0, 0.8, -1}, paths.size(), 390.0, 500.0,
                                  sim::derive_seed(config.seed, 4), 15.0, 5.0);
  std::vector<double> entries, orientations;
  for (size_t i = 0; i < paths.size(); ++i) {
    PathRecord record;
    record.planned_image = paths[i];
    const DepthFrame frame = sim::render_frame(study.scene, view_poses[i], intrinsics,
                                               sim::derive_seed(config.seed, 100 + i));
    const auto tools = track(frame, {study.reference_tool}, config.retro);
    if (!tools[0].pose) {
      record.failure = "reference tool not tracked";
      result.records.push_back(record);
      continue;
    }
    // simulator supplies the HMD self-localization terms: the sensor pose is
    // the rig pose, sensor-to-rig is identity
    const RigidTransform t_img_world = image_to_world(
        view_poses[i], RigidTransform::identity(), tools[0].pose->transform, t_img_tool);
    const PlannedPath displayed = path_to_world(paths[i], t_img_world);

    // operator hand noise on the displayed path
    Eigen::Vector3d achieved_entry = displayed.entry_mm;
    Eigen::Vector3d achieved_dir = displayed.direction();
    if (config.operator_sigma_pos_mm > 0.0) {
      achieved_entry += config.operator_sigma_pos_mm *
                        Eigen::Vector3d(normal01(operator_rng), normal01(operator_rng),
                                        normal01(operator_rng));
    }
    if (config.operator_sigma_deg > 0.0) {
      Eigen::Vector3d ortho = achieved_dir.cross(Eigen::Vector3d::UnitX());
      if (ortho.norm() < 1e-6) ortho = achieved_dir.cross(Eigen::Vector3d::UnitY());
      ortho.normalize();
      const double tilt = deg2rad(config.operator_sigma_deg * normal01(operator_rng));
      const double spin = 2.0 * kPi * std::uniform_real_distribution<double>(0, 1)(operator_rng);
      const Eigen::Vector3d axis = Eigen::AngleAxisd(spin, achieved_dir) * ortho;
      achieved_dir = Eigen::AngleAxisd(tilt, axis) * achieved_dir;
    }

    const PlannedPath truth_world = path_to_world(paths[i], study.scene.head_pose);
    record.error = guidance_error(truth_world, achieved_entry, achieved_dir);
    entries.push_back(record.error->entry_error_mm);
    orientations.push_back(record.error->orientation_error_deg);
    result.records.push_back(record);
  }

  if (!entries.empty()) {
    result.mean_entry_mm = mean(entries);
    result.sd_entry_mm = stddev(entries);
    result.mean_orientation_deg = mean(orientations);
    result.sd_orientation_deg = stddev(orientations);
  }
  return result;
}

}  // namespace navkit
