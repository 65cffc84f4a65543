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

#ifndef ECFLOW_KINEMATICS_HPP_
#define ECFLOW_KINEMATICS_HPP_

#include <vector>

#include "ecflow/pose.hpp"
#include "ecflow/urdf_model.hpp"

namespace ecflow {

// Per-link poses in the base frame, one entry per chain link (root first).
// The last entry is the end-effector pose.
std::vector<Pose> forward_kinematics(const KinematicChain& chain, const JointConfig& config);

inline Pose tip_pose(const KinematicChain& chain, const JointConfig& config) {
  return forward_kinematics(chain, config).back();
}

// 6 x dof, base frame, referenced at the tip point: linear (m/rad or m/m) on
// rows 0..2, angular (rad/rad) on rows 3..5.
Eigen::MatrixXd geometric_jacobian(const KinematicChain& chain, const JointConfig& config);

struct IkOptions {
  double tolerance = 1e-10;  // both meters and radians
  int max_iters = 200;
  double damping = 1e-3;  // initial lambda; doubled on residual increase, halved on decrease
};

struct IkResult {
  JointConfig config;
  bool converged = false;
  double pos_residual = 0.0;  // meters
  double rot_residual = 0.0;  // radians
  int iterations = 0;
};

// Damped-least-squares IK, clamped to joint limits after every step. Returns
// the seed untouched (zero iterations) when it already satisfies the target;
// on failure returns best-so-far with converged = false.
IkResult inverse_kinematics(const KinematicChain& chain, const Pose& target,
                            const JointConfig& seed, const IkOptions& opts = {});

// Rigid motion of each link between two configurations:
//   delta[i] = T_i(config_b) * T_i(config_a)^-1
// so delta[i] * p maps any point rigidly attached to link i at config_a to its
// position at config_b.
std::vector<Pose> link_motion_between(const KinematicChain& chain, const JointConfig& config_a,
                                      const JointConfig& config_b);

}  // namespace ecflow

#endif  // ECFLOW_KINEMATICS_HPP_
