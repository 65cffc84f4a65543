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

#include "ecflow/kinematics.hpp"

#include <cmath>

#include "ecflow/errors.hpp"

namespace ecflow {

namespace {

Pose joint_motion(const JointSpec& joint, double q) {
  switch (joint.kind) {
    case JointKind::kRevolute:
      return Pose::from_axis_angle(joint.axis, q);
    case JointKind::kPrismatic:
      return Pose::from_translation(joint.axis * q);
    case JointKind::kFixed:
      return Pose::identity();
  }
  return Pose::identity();
}

}  // namespace

std::vector<Pose> forward_kinematics(const KinematicChain& chain, const JointConfig& config) {
  if (config.size() != chain.dof) {
    throw Error(ErrorCode::kDimensionMismatch,
                "forward_kinematics: config has " + std::to_string(config.size()) +
                    " entries, chain has dof " + std::to_string(chain.dof));
  }
  std::vector<Pose> out;
  out.reserve(chain.links.size());
  Pose cursor = chain.base_pose;
  out.push_back(cursor);
  int slot = 0;
  for (const JointSpec& joint : chain.joints) {
    double q = 0.0;
    if (joint.mobile()) q = config[slot++];
    cursor = cursor * joint.origin * joint_motion(joint, q);
    cursor.normalize();
    out.push_back(cursor);
  }
  return out;
}

Eigen::MatrixXd geometric_jacobian(const KinematicChain& chain, const JointConfig& config) {
  std::vector<Pose> poses = forward_kinematics(chain, config);
  const Eigen::Vector3d tip = poses.back().translation;

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(6, chain.dof);
  int slot = 0;
  for (std::size_t i = 0; i < chain.joints.size(); ++i) {
    const JointSpec& joint = chain.joints[i];
    if (!joint.mobile()) continue;
    // Joint frame = parent link pose composed with the joint origin; the axis
    // lives in that frame.
    const Pose frame = poses[i] * joint.origin;
    const Eigen::Vector3d axis_world = frame.rotation * joint.axis;
    if (joint.kind == JointKind::kRevolute) {
      jac.block<3, 1>(0, slot) = axis_world.cross(tip - frame.translation);
      jac.block<3, 1>(3, slot) = axis_world;
    } else {
      jac.block<3, 1>(0, slot) = axis_world;
      // angular rows stay zero for prismatic joints
    }
    ++slot;
  }
  return jac;
}

namespace {

// 6-vector error: [position; orientation log] of target relative to current.
Eigen::Matrix<double, 6, 1> pose_error(const Pose& current, const Pose& target) {
  Eigen::Matrix<double, 6, 1> err;
  err.head<3>() = target.translation - current.translation;
  Eigen::Quaterniond dq = target.rotation * current.rotation.conjugate();
  if (dq.w() < 0.0) dq.coeffs() *= -1.0;
  Eigen::AngleAxisd aa(dq);
  err.tail<3>() = aa.axis() * aa.angle();
  return err;
}

}  // namespace

IkResult inverse_kinematics(const KinematicChain& chain, const Pose& target,
                            const JointConfig& seed, const IkOptions& opts) {
  if (seed.size() != chain.dof) {
    throw Error(ErrorCode::kDimensionMismatch, "inverse_kinematics: seed size mismatch");
  }

  IkResult res;
  res.config = clamp_to_limits(chain, seed);

  auto residuals = [&](const JointConfig& q, double* pos, double* rot) {
    Pose cur = tip_pose(chain, q);
    Eigen::Matrix<double, 6, 1> e = pose_error(cur, target);
    *pos = e.head<3>().norm();
    *rot = e.tail<3>().norm();
    return e;
  };

  Eigen::Matrix<double, 6, 1> err = residuals(res.config, &res.pos_residual, &res.rot_residual);
  if (res.pos_residual <= opts.tolerance && res.rot_residual <= opts.tolerance) {
    // Seed already solves the target; hand it back bit-for-bit.
    res.config = seed;
    res.converged = true;
    return res;
  }

  // For a redundant chain the target pins only a manifold of configs, and the
  // damping path decides where on it the iteration stops, so the returned
  // config can twitch under tiny target changes. A fixed number of identical
  // null-space slides toward the seed, with the task correction folded into
  // the same update, lands on a config that varies smoothly with the target;
  // any accept-or-reject branching here would reintroduce the twitching.
  auto seed_pull = [&](JointConfig q) {
    JointConfig home = clamp_to_limits(chain, seed);
    JointConfig before = q;
    for (int it = 0; it < 12; ++it) {
      Eigen::MatrixXd jac = geometric_jacobian(chain, q);
      Eigen::MatrixXd jjt = jac * jac.transpose();
      jjt.diagonal().array() += 1e-12;
      double pos, rot;
      Eigen::Matrix<double, 6, 1> e = residuals(q, &pos, &rot);
      Eigen::VectorXd toward = home - q;
      Eigen::VectorXd slide = toward - jac.transpose() * jjt.ldlt().solve(jac * toward);
      q = clamp_to_limits(chain, q + jac.transpose() * jjt.ldlt().solve(e) + 0.5 * slide);
    }
    double pos, rot;
    residuals(q, &pos, &rot);
    if (pos > opts.tolerance || rot > opts.tolerance) return before;
    return q;
  };

  double lambda = opts.damping;
  JointConfig best = res.config;
  double best_pos = res.pos_residual;
  double best_rot = res.rot_residual;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    res.iterations = iter + 1;
    Eigen::MatrixXd jac = geometric_jacobian(chain, res.config);
    Eigen::MatrixXd jjt = jac * jac.transpose();
    jjt.diagonal().array() += lambda * lambda;
    Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err);

    JointConfig trial = clamp_to_limits(chain, res.config + dq);
    double trial_pos, trial_rot;
    Eigen::Matrix<double, 6, 1> trial_err = residuals(trial, &trial_pos, &trial_rot);

    if (trial_pos + trial_rot < res.pos_residual + res.rot_residual) {
      res.config = trial;
      res.pos_residual = trial_pos;
      res.rot_residual = trial_rot;
      err = trial_err;
      lambda = std::max(lambda * 0.5, 1e-12);
      if (trial_pos + trial_rot < best_pos + best_rot) {
        best = trial;
        best_pos = trial_pos;
        best_rot = trial_rot;
      }
    } else {
      lambda *= 2.0;
      if (lambda > 1e8) break;
    }

    if (res.pos_residual <= opts.tolerance && res.rot_residual <= opts.tolerance) {
      res.config = seed_pull(res.config);
      residuals(res.config, &res.pos_residual, &res.rot_residual);
      res.converged = true;
      return res;
    }
  }

  res.config = best;
  res.pos_residual = best_pos;
  res.rot_residual = best_rot;
  res.converged = best_pos <= opts.tolerance && best_rot <= opts.tolerance;
  if (res.converged) {
    res.config = seed_pull(res.config);
    residuals(res.config, &res.pos_residual, &res.rot_residual);
  }
  return res;
}

std::vector<Pose> link_motion_between(const KinematicChain& chain, const JointConfig& config_a,
                                      const JointConfig& config_b) {
  std::vector<Pose> pa = forward_kinematics(chain, config_a);
  std::vector<Pose> pb = forward_kinematics(chain, config_b);
  std::vector<Pose> out;
  out.reserve(pa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    Pose delta = pb[i] * pa[i].inverse();
    delta.normalize();
    out.push_back(delta);
  }
  return out;
}

}  // namespace ecflow
