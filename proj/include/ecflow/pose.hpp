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

#ifndef ECFLOW_POSE_HPP_
#define ECFLOW_POSE_HPP_

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>

namespace ecflow {

// Rigid transform in SE(3): unit quaternion + translation in meters.
// Composition a * b applies b first, then a; p_world = pose * p_local.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& t)
      : rotation(q.normalized()), translation(t) {}

  static Pose identity() { return Pose(); }

  static Pose from_axis_angle(const Eigen::Vector3d& axis, double angle,
                              const Eigen::Vector3d& t = Eigen::Vector3d::Zero()) {
    return Pose(Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis.normalized())), t);
  }

  static Pose from_translation(const Eigen::Vector3d& t) {
    return Pose(Eigen::Quaterniond::Identity(), t);
  }

  // Extrinsic X-Y-Z convention: roll about fixed x, then pitch about fixed y,
  // then yaw about fixed z (standard URDF rpy semantics).
  static Pose from_rpy(const Eigen::Vector3d& xyz, const Eigen::Vector3d& rpy) {
    Eigen::Quaterniond q = Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
                           Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
                           Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX());
    return Pose(q, xyz);
  }

  Pose operator*(const Pose& other) const {
    return Pose(rotation * other.rotation, translation + rotation * other.translation);
  }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  Pose inverse() const {
    Eigen::Quaterniond qi = rotation.conjugate();
    return Pose(qi, -(qi * translation));
  }

  Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }

  // Rotation vector (axis * angle) of this pose's rotation, in [0, pi].
  Eigen::Vector3d rotation_log() const {
    Eigen::AngleAxisd aa(rotation);
    double angle = aa.angle();
    if (angle > M_PI) angle -= 2.0 * M_PI;  // Eigen returns [0, 2pi) for some inputs
    return aa.axis() * angle;
  }

  void normalize() { rotation.normalize(); }
};

// Geodesic distance between rotations, radians in [0, pi].
inline double rotation_distance(const Pose& a, const Pose& b) {
  double dot = std::abs(a.rotation.dot(b.rotation));
  dot = std::min(1.0, dot);
  return 2.0 * std::acos(dot);
}

inline double translation_distance(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

}  // namespace ecflow

#endif  // ECFLOW_POSE_HPP_
