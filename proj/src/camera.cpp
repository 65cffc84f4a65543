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

#include "ecflow/camera.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ecflow/blob_io.hpp"
#include "ecflow/errors.hpp"
#include "ecflow/kinematics.hpp"

namespace ecflow {

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kFormatError, "camera: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kFormatError, "camera: image size must be positive");
  }
  if (!(cx > 0.0) || !(cx < width) || !(cy > 0.0) || !(cy < height)) {
    throw Error(ErrorCode::kFormatError, "camera: principal point outside image");
  }
}

CameraModel parse_camera_text(const std::string& text) {
  std::map<std::string, double> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    double value;
    if (!(ls >> key >> value)) {
      throw Error(ErrorCode::kFormatError, "camera: bad line '" + line + "'");
    }
    kv[key] = value;
  }
  const char* required[] = {"fx", "fy", "cx", "cy", "width", "height",
                            "qw", "qx", "qy", "qz", "tx", "ty", "tz"};
  for (const char* key : required) {
    if (!kv.count(key)) {
      throw Error(ErrorCode::kFormatError, std::string("camera: missing key ") + key);
    }
  }
  CameraModel cam;
  cam.fx = kv["fx"];
  cam.fy = kv["fy"];
  cam.cx = kv["cx"];
  cam.cy = kv["cy"];
  cam.width = static_cast<int>(kv["width"]);
  cam.height = static_cast<int>(kv["height"]);
  cam.world_to_camera.rotation = Eigen::Quaterniond(kv["qw"], kv["qx"], kv["qy"], kv["qz"]);
  cam.world_to_camera.rotation.normalize();
  cam.world_to_camera.translation = Eigen::Vector3d(kv["tx"], kv["ty"], kv["tz"]);
  cam.validate();
  return cam;
}

std::string camera_to_text(const CameraModel& camera) {
  char buf[64];
  std::ostringstream os;
  auto emit = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << key << " " << buf << "\n";
  };
  emit("fx", camera.fx);
  emit("fy", camera.fy);
  emit("cx", camera.cx);
  emit("cy", camera.cy);
  emit("width", camera.width);
  emit("height", camera.height);
  const Eigen::Quaterniond& q = camera.world_to_camera.rotation;
  emit("qw", q.w());
  emit("qx", q.x());
  emit("qy", q.y());
  emit("qz", q.z());
  const Eigen::Vector3d& t = camera.world_to_camera.translation;
  emit("tx", t.x());
  emit("ty", t.y());
  emit("tz", t.z());
  return os.str();
}

CameraModel load_camera(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return parse_camera_text(os.str());
}

void save_camera(const CameraModel& camera, const std::string& path) {
  std::string text = camera_to_text(camera);
  write_file_bytes(path, text.data(), text.size());
}

Pixel project(const CameraModel& camera, const Eigen::Vector3d& point_world) {
  Eigen::Vector3d pc = camera.world_to_camera * point_world;
  if (pc.z() <= 1e-9) {
    throw Error(ErrorCode::kBehindCamera, "project: point at or behind the image plane");
  }
  Pixel px;
  px.u = camera.fx * pc.x() / pc.z() + camera.cx;
  px.v = camera.fy * pc.y() / pc.z() + camera.cy;
  return px;
}

Eigen::Vector3d lift(const CameraModel& camera, const Pixel& pixel, double depth) {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::kInvalidDepth, "lift: depth must be positive");
  }
  if (pixel.u < 0.0 || pixel.u > camera.width || pixel.v < 0.0 || pixel.v > camera.height) {
    throw Error(ErrorCode::kOutOfImage, "lift: pixel outside image bounds");
  }
  Eigen::Vector3d pc;
  pc.x() = (pixel.u - camera.cx) / camera.fx * depth;
  pc.y() = (pixel.v - camera.cy) / camera.fy * depth;
  pc.z() = depth;
  return camera.world_to_camera.inverse() * pc;
}

float DepthMap::sample_nearest(double u, double v) const {
  // pixel (i, j) covers [i, i+1) x [j, j+1), center at (i+0.5, j+0.5)
  if (u < 0.0 || u > width || v < 0.0 || v > height) {
    throw Error(ErrorCode::kOutOfImage, "depth sample outside image");
  }
  int iu = std::clamp(static_cast<int>(std::floor(u)), 0, width - 1);
  int iv = std::clamp(static_cast<int>(std::floor(v)), 0, height - 1);
  return at(iu, iv);
}

DepthMap load_depth(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  DepthMap d;
  d.width = static_cast<int>(read_u32(is));
  d.height = static_cast<int>(read_u32(is));
  if (d.width <= 0 || d.height <= 0 || d.width > 1 << 16 || d.height > 1 << 16) {
    throw Error(ErrorCode::kFormatError, "depth file: implausible size in " + path);
  }
  d.data.resize(static_cast<std::size_t>(d.width) * d.height);
  read_f32_array(is, d.data.data(), d.data.size());
  return d;
}

void save_depth(const DepthMap& depth, const std::string& path) {
  if (depth.data.size() != static_cast<std::size_t>(depth.width) * depth.height) {
    throw Error(ErrorCode::kShapeMismatch, "save_depth: data size disagrees with header");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot open " + path + " for write");
  write_u32(os, static_cast<std::uint32_t>(depth.width));
  write_u32(os, static_cast<std::uint32_t>(depth.height));
  write_f32_array(os, depth.data.data(), depth.data.size());
  if (!os) throw Error(ErrorCode::kIoError, "short write on " + path);
}

void BBox::expand(double u, double v) {
  if (empty) {
    min_u = max_u = u;
    min_v = max_v = v;
    empty = false;
    return;
  }
  min_u = std::min(min_u, u);
  max_u = std::max(max_u, u);
  min_v = std::min(min_v, v);
  max_v = std::max(max_v, v);
}

bool BBox::contains(double u, double v) const {
  return !empty && u >= min_u && u <= max_u && v >= min_v && v <= max_v;
}

bool BBox::intersects(const BBox& other) const {
  if (empty || other.empty) return false;
  return min_u <= other.max_u && other.min_u <= max_u && min_v <= other.max_v &&
         other.min_v <= max_v;
}

BBox BBox::clipped(int width, int height) const {
  if (empty) return {};
  BBox out;
  out.min_u = std::max(min_u, 0.0);
  out.min_v = std::max(min_v, 0.0);
  out.max_u = std::min(max_u, static_cast<double>(width));
  out.max_v = std::min(max_v, static_cast<double>(height));
  out.empty = out.min_u > out.max_u || out.min_v > out.max_v;
  return out;
}

std::vector<Eigen::Vector3d> geometry_sample_points(const LinkGeometry& geom) {
  std::vector<Eigen::Vector3d> pts;
  switch (geom.kind) {
    case GeometryKind::kBox: {
      const Eigen::Vector3d h = geom.dims * 0.5;
      for (int sx : {-1, 1})
        for (int sy : {-1, 1})
          for (int sz : {-1, 1}) pts.emplace_back(sx * h.x(), sy * h.y(), sz * h.z());
      break;
    }
    case GeometryKind::kCylinder: {
      // Axis along local z, half length on each side.
      const double r = geom.dims[0];
      const double hl = geom.dims[1] * 0.5;
      for (int end : {-1, 1}) {
        for (int k = 0; k < 16; ++k) {
          double a = 2.0 * M_PI * k / 16.0;
          pts.emplace_back(r * std::cos(a), r * std::sin(a), end * hl);
        }
      }
      break;
    }
    case GeometryKind::kSphere: {
      const double r = geom.dims[0];
      for (int sx : {-1, 0, 1})
        for (int sy : {-1, 0, 1})
          for (int sz : {-1, 0, 1}) {
            if (sx == 0 && sy == 0 && sz == 0) continue;
            Eigen::Vector3d dir(sx, sy, sz);
            pts.emplace_back(r * dir.normalized());
          }
      break;
    }
  }
  for (Eigen::Vector3d& p : pts) p = geom.origin * p;
  return pts;
}

std::vector<BBox> project_joint_bboxes(const KinematicChain& chain, const JointConfig& config,
                                       const CameraModel& camera) {
  std::vector<Pose> link_poses = forward_kinematics(chain, config);
  std::vector<int> groups = chain.rigid_groups();

  std::vector<BBox> boxes(static_cast<std::size_t>(chain.dof));
  for (std::size_t li = 0; li < chain.links.size(); ++li) {
    int g = groups[li];
    if (g == 0) continue;  // static base carries no box
    BBox& box = boxes[g - 1];
    auto it = chain.geometries.find(chain.links[li]);
    LinkGeometry geom;
    if (it != chain.geometries.end()) {
      geom = it->second;
    } else {
      // bare links still need a box so their joint stays assignable
      geom.kind = GeometryKind::kSphere;
      geom.dims = Eigen::Vector3d(0.02, 0.0, 0.0);
    }
    for (const Eigen::Vector3d& local : geometry_sample_points(geom)) {
      Eigen::Vector3d world = link_poses[li] * local;
      try {
        Pixel px = project(camera, world);
        box.expand(px.u, px.v);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kBehindCamera) throw;
        // samples behind the camera simply do not contribute
      }
    }
  }
  for (BBox& box : boxes) box = box.clipped(camera.width, camera.height);
  return boxes;
}

}  // namespace ecflow
