// Copyright 2026 The ecflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ECFLOW_ORACLE_HPP_
#define ECFLOW_ORACLE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "ecflow/camera.hpp"
#include "ecflow/denoiser.hpp"
#include "ecflow/diffusion.hpp"
#include "ecflow/parallel.hpp"
#include "ecflow/trajectory.hpp"
#include "ecflow/urdf_model.hpp"

namespace ecflow {

struct WorldBox {
  Pose pose;            // world frame
  Eigen::Vector3d half;  // half extents, meters
};

struct SyntheticScene {
  KinematicChain chain;
  CameraModel camera;
  std::vector<JointConfig> trajectory;  // length T, in limits
  int task_id = 0;
  std::uint64_t seed = 0;
  std::vector<WorldBox> occluders;
};

// --- analytic ray casting -------------------------------------------------

// Ray with direction scaled so the parameter equals camera-frame depth: for a
// camera ray through pixel (u, v) the hit parameter is the z a depth camera
// would report.
struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d dir;
};

Ray camera_ray(const CameraModel& camera, double u, double v);

constexpr double kRayMiss = 1e30;

// Local-frame intersections; return the smallest parameter >= s_min, or
// kRayMiss. The box takes half extents, the cylinder is z-aligned with half
// length hl, all canonical at the origin.
double ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& half,
               double s_min);
double ray_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double radius, double hl,
                    double s_min);
double ray_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double radius,
                  double s_min);

// One world-posed primitive of a configured scene. group: 0 static base,
// 1..dof moving groups, -1 occluder box.
struct ScenePrimitive {
  Pose world_pose;
  GeometryKind kind = GeometryKind::kSphere;
  Eigen::Vector3d dims = Eigen::Vector3d::Zero();
  int group = 0;
  int link_index = -1;  // -1 for occluders
};

std::vector<ScenePrimitive> scene_primitives(const SyntheticScene& scene, int frame);

struct RayHit {
  double s = kRayMiss;   // camera-frame depth
  int primitive = -1;    // index into the primitive list, -1 on miss
};

RayHit cast_ray(const std::vector<ScenePrimitive>& prims, const Ray& ray, double s_min = 1e-6);

// --- rendering ------------------------------------------------------------

// Z-buffer render at `factor`x supersampling: depth holds camera-frame z per
// subpixel (0 where nothing is hit), ids the hit primitive index (-1 none).
struct IdDepthBuffer {
  int factor = 1;
  DepthMap depth;         // (factor*W) x (factor*H)
  std::vector<int> ids;   // same layout
};

IdDepthBuffer render_id_depth(const SyntheticScene& scene, int frame, int factor,
                              const ExecConfig& exec = ExecConfig::serial());

// Plain depth map at camera resolution from exact pixel-center rays;
// background cells hold the invalid sentinel 0.
DepthMap render_depth(const SyntheticScene& scene, int frame,
                      const ExecConfig& exec = ExecConfig::serial());

// Overwrites a fraction of the valid cells with -1; returns the flat indices
// of the cells it invalidated.
std::vector<int> inject_invalid_depth(DepthMap& depth, double fraction, std::uint64_t seed);

// Depth-shaded gray render at an arbitrary (small) resolution, 2x2 subsamples
// per pixel, shade 1 at 0.5 m falling to 0 at 5 m, background 0.
GoalImage render_gray(const SyntheticScene& scene, int frame, int height, int width);
GoalImage render_initial(const SyntheticScene& scene);
GoalImage render_goal_image(const SyntheticScene& scene);

// --- flow -----------------------------------------------------------------

struct FlowRender {
  FlowTensor flow;                           // normalized, visibility in {0,1}
  std::vector<int> group_labels;             // rigid group per point
  std::vector<int> link_indices;             // chain link per point
  std::vector<Eigen::Vector3d> local_points;  // link-frame attachment
  Eigen::MatrixXd point_depth;               // n_points x T camera z, -1 if not visible
};

// Samples n_points attachment points from the embodiment's frame-0 pixel
// footprint (area proportional by construction), then tracks them through the
// trajectory. Visibility is an exact per-point occlusion ray test. Point
// pixels are kept in distinct image cells per frame among mutually visible
// points, which is what lets the exported depth maps carry each tracked
// point's exact depth (see point_consistent_depth).
FlowRender render_flow(const SyntheticScene& scene, int n_points, std::uint64_t seed);

// render_depth plus one overwrite per point visible in this frame: the cell
// under the point's pixel gets the point's own camera z, so nearest-cell
// lookup followed by back-projection reconstructs the tracked point exactly.
DepthMap point_consistent_depth(const SyntheticScene& scene, int frame, const FlowRender& fr,
                                const ExecConfig& exec = ExecConfig::serial());

// Adds i.i.d. pixel noise (std sigma_px, denormalized scale) to the u, v
// channels of frames >= 1. Frame 0 and visibility stay untouched.
void perturb_flow(FlowTensor& flow, double sigma_px, int width, int height, std::uint64_t seed);

// --- trajectories and scenes ---------------------------------------------

// In-limit joint-space cubic spline through random in-limit knots; per-step
// joint deltas bounded by max_step (radians or meters per frame).
std::vector<JointConfig> gen_trajectory(const KinematicChain& chain, int horizon,
                                        std::uint64_t seed, double max_step = 0.35);

// Replaces each config after the first by the damped-least-squares IK
// solution for its own tip pose seeded from the previous config. Tip poses
// are preserved (to IK tolerance); the configs become exactly the fixed
// points the action solver's inner IK reproduces when chaining.
std::vector<JointConfig> ik_consistent_trajectory(const KinematicChain& chain,
                                                  const std::vector<JointConfig>& trajectory);

struct SceneOptions {
  int horizon = 8;
  double max_joint_step = 0.35;
  double min_tip_motion_px = 3.0;   // per step
  double max_tip_motion_px = 30.0;  // per step
  double image_margin_px = 6.0;     // tip stays this far inside the image
  // Footprint floors. The pose search can only pin the tip when the terminal
  // rigid group keeps projected area in every frame, and when the material
  // sampled at frame 0 stays observable through the whole horizon.
  int min_eef_cells = 24;     // per-frame 1x footprint, terminal group
  int min_group_cells = 6;    // same floor for every other moving group
  int min_eef_tracked = 12;   // frame-0 terminal cells still visible later
  int max_attempts = 128;
};

// Deterministic per seed; retries derived seeds until the trajectory keeps the
// tip inside the image with per-step pixel motion inside the configured band
// and every moving group clears the footprint floors, then applies the IK
// consistency pass.
SyntheticScene make_scene(const KinematicChain& chain, const CameraModel& camera, int task_id,
                          std::uint64_t seed, const SceneOptions& opts = {});

// Scene whose last moving group is hidden behind an occluder box for at least
// min_occluded_frames of the horizon (verified by ray casting, deterministic
// retries).
SyntheticScene make_occluded_scene(const KinematicChain& chain, const CameraModel& camera,
                                   int task_id, std::uint64_t seed, int min_occluded_frames = 3,
                                   const SceneOptions& opts = {});

// --- samples and datasets -------------------------------------------------

struct SceneSample {
  GoalImage initial_image;  // gray, conditioning frame
  FlowTensor flow;
  std::vector<DepthMap> depths;
  std::vector<std::vector<int>> invalid_masks;  // injected invalid cells per frame
  GoalImage goal_image;
  int task_id = 0;
  CameraModel camera;
  JointConfig init_config;
  PoseTrajectory gt_traj;
  std::vector<int> group_labels;  // oracle-side only
};

struct SampleOptions {
  int n_points = 400;
  double invalid_depth_fraction = 0.0;
  int goal_h = 16, goal_w = 16;
  ExecConfig exec = ExecConfig::serial();
};

SceneSample make_sample(const SyntheticScene& scene, std::uint64_t seed,
                        const SampleOptions& opts = {});

ConditioningBundle conditioning_from_sample(const SceneSample& sample, int task_dim);
TrainSample train_sample_from(const SceneSample& sample, int task_dim);

struct Dataset {
  std::vector<SceneSample> samples;
  KinematicChain chain;
  int n_points = 0;
  int horizon = 0;
};

// Directory layout: manifest.json, robot.urdf, scene_<k>/{flow.bin,
// depth_<t>.bin, init.bin, goal.bin, labels.bin, gt_traj.csv, camera.txt,
// init_config.txt}. The manifest records shapes and a crc32 per file; import
// verifies both.
void export_dataset(const Dataset& dataset, const std::string& dir);
Dataset import_dataset(const std::string& dir);

}  // namespace ecflow

#endif  // ECFLOW_ORACLE_HPP_
