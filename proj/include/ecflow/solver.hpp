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

#ifndef ECFLOW_SOLVER_HPP_
#define ECFLOW_SOLVER_HPP_

#include <vector>

#include "ecflow/camera.hpp"
#include "ecflow/diffusion.hpp"
#include "ecflow/kinematics.hpp"
#include "ecflow/trajectory.hpp"
#include "ecflow/urdf_model.hpp"

namespace ecflow {

enum class ConfigSource { kChained, kProvided };

struct SolverConfig {
  double motion_threshold = 0.5;      // pixels per step, minimum displacement
  double visibility_threshold = 0.5;  // on the [0,1] visibility channel
  Eigen::VectorXd joint_weights;      // length dof; empty means all ones
  int max_opt_iters = 60;
  double opt_tolerance = 1e-10;  // pixels, cost-change stop for the pose search
  bool warm_start = true;
  bool skip_degenerate = false;  // carry the previous pose instead of aborting
  ConfigSource config_source = ConfigSource::kChained;
  std::vector<JointConfig> provided_configs;  // length T when kProvided
  IkOptions inner_ik{1e-8, 100, 1e-3};
};

// Filtered, assigned, and lifted points feeding one step's pose search.
struct JointPointEntry {
  int point_index = 0;
  Pixel pixel_t;                                      // observed pixel at t
  Pixel target_t1;                                    // predicted pixel at t+1
  Eigen::Vector3d world_t = Eigen::Vector3d::Zero();  // filled by lift_points
};

struct JointPointSet {
  std::vector<std::vector<JointPointEntry>> per_joint;  // index j-1 for joint j
  int total() const {
    int n = 0;
    for (const auto& v : per_joint) n += static_cast<int>(v.size());
    return n;
  }
};

// Survivors have visibility >= threshold at t and t+1, pixel displacement of
// at least motion_threshold, and a valid depth cell under the time-t pixel.
std::vector<int> filter_points(const FlowTensor& flow, int t, const DepthMap& depth,
                               const SolverConfig& cfg);

// Points inside exactly one rectangle are kept; zero or two and more discard
// the point.
JointPointSet assign_points_to_joints(const FlowTensor& flow, int t,
                                      const std::vector<int>& surviving,
                                      const std::vector<BBox>& bboxes, const CameraModel& camera);

// Back-projects every assigned point through its time-t depth cell.
void lift_points(JointPointSet& set, const DepthMap& depth, const CameraModel& camera);

// Weighted sum over joints of per-point pixel distances between the moved,
// reprojected time-t points and the predicted time-t+1 pixels. The candidate
// pose is mapped to a configuration by damped-least-squares IK seeded at
// config_t; an unconverged IK or a point behind the camera contributes a 1e6
// px penalty so the value stays finite everywhere.
double reprojection_error(const Pose& candidate, const JointPointSet& set,
                          const KinematicChain& chain, const JointConfig& config_t,
                          const CameraModel& camera, const Eigen::VectorXd& weights,
                          const IkOptions& inner_ik = {1e-8, 100, 1e-3});

struct StepResult {
  Pose pose;
  double residual = 0.0;  // reprojection_error at the returned pose
  JointConfig config_next;
  int iterations = 0;
  bool converged = false;
};

// One step of the pose search: filter, assign against the time-t joint boxes,
// lift, then Levenberg-Marquardt over a 6-dim chart (translation plus world
// axis-angle) anchored at the warm-start pose with forward-difference
// Jacobians.
StepResult solve_step(const FlowTensor& flow, int t, const JointConfig& config_t,
                      const DepthMap& depth, const CameraModel& camera,
                      const KinematicChain& chain, const SolverConfig& cfg,
                      const Pose& prev_pose);

// Sequential over steps with warm-start chaining; entry 0 is the tip pose of
// the initial configuration. Depth maps are per frame, flow.horizon of them.
PoseTrajectory solve_trajectory(const FlowTensor& flow, const std::vector<DepthMap>& depths,
                                const CameraModel& camera, const KinematicChain& chain,
                                const JointConfig& init_config, const SolverConfig& cfg);

}  // namespace ecflow

#endif  // ECFLOW_SOLVER_HPP_
