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

#ifndef ECFLOW_URDF_MODEL_HPP_
#define ECFLOW_URDF_MODEL_HPP_

#include <map>
#include <string>
#include <vector>

#include "ecflow/pose.hpp"

namespace ecflow {

enum class JointKind { kRevolute, kPrismatic, kFixed };

struct JointSpec {
  std::string name;
  JointKind kind = JointKind::kFixed;
  Pose origin;                                   // parent-link frame
  Eigen::Vector3d axis = Eigen::Vector3d::UnitX();  // unit, child/joint frame
  double limit_lower = 0.0;                      // rad (revolute) / m (prismatic)
  double limit_upper = 0.0;
  std::string parent_link;
  std::string child_link;

  bool mobile() const { return kind != JointKind::kFixed; }
};

enum class GeometryKind { kBox, kCylinder, kSphere };
enum class GeometrySource { kCollision, kVisual, kDefault };

struct LinkGeometry {
  std::string link_name;
  GeometryKind kind = GeometryKind::kSphere;
  // box: dims = (dx, dy, dz); cylinder: dims = (radius, length, 0);
  // sphere: dims = (radius, 0, 0). All meters, > 0.
  Eigen::Vector3d dims = Eigen::Vector3d(0.02, 0.0, 0.0);
  Pose origin;  // link frame
  GeometrySource source = GeometrySource::kDefault;
};

// Serial chain parsed from a URDF subset. Immutable after construction; safe
// for unlimited concurrent readers.
struct KinematicChain {
  std::vector<std::string> links;                 // root -> tip
  std::vector<JointSpec> joints;                  // joints[i] connects links[i] -> links[i+1]
  std::map<std::string, LinkGeometry> geometries; // every link has one (default filled)
  int dof = 0;                                    // count of non-fixed joints
  Pose base_pose;                                 // world mounting pose of the root link
  std::string name;

  int link_index(const std::string& link) const;  // -1 when absent

  // Index into a JointConfig vector for each joint; -1 for fixed joints.
  std::vector<int> config_slots() const;

  // Rigid-group id per link: 0 = static base group, j in [1, dof] = links that
  // move rigidly with the j-th non-fixed joint (its child link plus any links
  // attached downstream through fixed joints).
  std::vector<int> rigid_groups() const;
};

using JointConfig = Eigen::VectorXd;

// Parses the supported URDF subset: robot, link, joint(revolute|prismatic|fixed),
// origin(xyz, rpy), axis, limit(lower, upper), collision/visual geometry
// (box|cylinder|sphere). Continuous/planar/floating joints are rejected;
// anything else unknown is ignored and reported through `warnings`.
KinematicChain parse_urdf(const std::string& xml_text,
                          std::vector<std::string>* warnings = nullptr);

// Emits the same subset; parse(serialize(chain)) reproduces the chain exactly.
std::string serialize_urdf(const KinematicChain& chain);

KinematicChain serial_subchain(const KinematicChain& chain, const std::string& base,
                               const std::string& tip);

void validate_chain(const KinematicChain& chain);

JointConfig clamp_to_limits(const KinematicChain& chain, const JointConfig& config);
bool within_limits(const KinematicChain& chain, const JointConfig& config, double tol = 0.0);
JointConfig zero_config(const KinematicChain& chain);

}  // namespace ecflow

#endif  // ECFLOW_URDF_MODEL_HPP_
