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

#ifndef ECFLOW_TRAJECTORY_HPP_
#define ECFLOW_TRAJECTORY_HPP_

#include <string>
#include <vector>

#include "ecflow/pose.hpp"

namespace ecflow {

// End-effector pose per time step with per-step solver diagnostics. Length
// equals the horizon; entry 0 is the known start pose (residual 0).
struct PoseTrajectory {
  std::vector<Pose> poses;
  std::vector<double> residuals;     // pixels
  std::vector<int> iterations;
  std::vector<bool> converged;
  std::vector<bool> degenerate;

  int size() const { return static_cast<int>(poses.size()); }
  void append(const Pose& pose, double residual, int iters, bool conv, bool degen);
};

// CSV dialect: comma separated, dot decimal, LF endings, header row
// "t,qw,qx,qy,qz,tx,ty,tz,residual_px,iterations,converged,degenerate",
// doubles printed with %.17g so a rewrite is byte-identical.
std::string trajectory_to_csv(const PoseTrajectory& traj);
PoseTrajectory trajectory_from_csv(const std::string& text);
void save_trajectory(const PoseTrajectory& traj, const std::string& path);
PoseTrajectory load_trajectory(const std::string& path);

struct TrajectoryError {
  std::vector<double> translation_m;  // per step
  std::vector<double> rotation_rad;
  double max_translation = 0.0;
  double max_rotation = 0.0;
  double mean_translation = 0.0;
  double mean_rotation = 0.0;
};

TrajectoryError compare_trajectories(const PoseTrajectory& estimate,
                                     const PoseTrajectory& reference);

}  // namespace ecflow

#endif  // ECFLOW_TRAJECTORY_HPP_
