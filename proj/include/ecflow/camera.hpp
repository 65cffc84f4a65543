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

#ifndef ECFLOW_CAMERA_HPP_
#define ECFLOW_CAMERA_HPP_

#include <string>
#include <vector>

#include "ecflow/pose.hpp"
#include "ecflow/urdf_model.hpp"

namespace ecflow {

struct CameraModel {
  double fx = 0.0, fy = 0.0;  // pixels
  double cx = 0.0, cy = 0.0;  // pixels
  int width = 0, height = 0;
  Pose world_to_camera;  // maps world points into the camera frame

  void validate() const;  // throws FormatError on bad intrinsics
};

// Flat key-value text, one "key value" pair per line:
//   fx fy cx cy width height qw qx qy qz tx ty tz
CameraModel load_camera(const std::string& path);
void save_camera(const CameraModel& camera, const std::string& path);
CameraModel parse_camera_text(const std::string& text);
std::string camera_to_text(const CameraModel& camera);

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

// Pinhole projection. Throws BehindCamera when camera-frame z <= 1e-9.
Pixel project(const CameraModel& camera, const Eigen::Vector3d& point_world);

// Depth-aware back-projection; exact inverse of project at matching depth.
// Throws InvalidDepth (depth <= 0) and OutOfImage.
Eigen::Vector3d lift(const CameraModel& camera, const Pixel& pixel, double depth);

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // row major, meters; invalid cells <= 0

  float at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  float& at(int u, int v) { return data[static_cast<std::size_t>(v) * width + u]; }

  // Nearest-pixel sample at continuous coordinates. Returns the stored value;
  // caller decides what to do with invalid (<= 0) cells. Throws OutOfImage.
  float sample_nearest(double u, double v) const;
};

// Binary depth file: uint32 width, uint32 height (little endian), then
// width*height float32 values row major.
DepthMap load_depth(const std::string& path);
void save_depth(const DepthMap& depth, const std::string& path);

struct BBox {
  double min_u = 0.0, min_v = 0.0;
  double max_u = 0.0, max_v = 0.0;
  bool empty = true;

  void expand(double u, double v);
  bool contains(double u, double v) const;
  bool intersects(const BBox& other) const;
  BBox clipped(int width, int height) const;
};

// One axis-aligned pixel rectangle per rigid group that moves with a joint
// (groups 1..dof of chain.rigid_groups(); the static base gets no box).
// Boxes come from projecting fixed sample sets of each link primitive:
// 8 corners for boxes, 16 ring samples at both ends for cylinders, 26
// direction samples for spheres. A group entirely behind the camera yields an
// empty box.
std::vector<BBox> project_joint_bboxes(const KinematicChain& chain, const JointConfig& config,
                                       const CameraModel& camera);

// Sample points of one geometry primitive in its link frame (the fixed counts
// above). Shared with the oracle renderer's ground-truth labelling.
std::vector<Eigen::Vector3d> geometry_sample_points(const LinkGeometry& geom);

}  // namespace ecflow

#endif  // ECFLOW_CAMERA_HPP_
