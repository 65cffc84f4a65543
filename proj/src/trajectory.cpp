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

#include "ecflow/trajectory.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ecflow/blob_io.hpp"
#include "ecflow/errors.hpp"

namespace ecflow {

namespace {

constexpr const char* kHeader = "t,qw,qx,qy,qz,tx,ty,tz,residual_px,iterations,converged,degenerate";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void PoseTrajectory::append(const Pose& pose, double residual, int iters, bool conv, bool degen) {
  poses.push_back(pose);
  residuals.push_back(residual);
  iterations.push_back(iters);
  converged.push_back(conv);
  degenerate.push_back(degen);
}

std::string trajectory_to_csv(const PoseTrajectory& traj) {
  std::ostringstream os;
  os << kHeader << "\n";
  for (int t = 0; t < traj.size(); ++t) {
    const Pose& p = traj.poses[t];
    os << t << "," << fmt(p.rotation.w()) << "," << fmt(p.rotation.x()) << ","
       << fmt(p.rotation.y()) << "," << fmt(p.rotation.z()) << "," << fmt(p.translation.x())
       << "," << fmt(p.translation.y()) << "," << fmt(p.translation.z()) << ","
       << fmt(traj.residuals[t]) << "," << traj.iterations[t] << ","
       << (traj.converged[t] ? 1 : 0) << "," << (traj.degenerate[t] ? 1 : 0) << "\n";
  }
  return os.str();
}

PoseTrajectory trajectory_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kHeader) {
    throw Error(ErrorCode::kFormatError, "trajectory csv: bad header");
  }
  PoseTrajectory traj;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 12) {
      throw Error(ErrorCode::kFormatError, "trajectory csv: expected 12 fields");
    }
    Pose p;
    p.rotation = Eigen::Quaterniond(std::stod(fields[1]), std::stod(fields[2]),
                                    std::stod(fields[3]), std::stod(fields[4]));
    p.translation =
        Eigen::Vector3d(std::stod(fields[5]), std::stod(fields[6]), std::stod(fields[7]));
    traj.append(p, std::stod(fields[8]), std::stoi(fields[9]), fields[10] == "1",
                fields[11] == "1");
  }
  return traj;
}

void save_trajectory(const PoseTrajectory& traj, const std::string& path) {
  std::string text = trajectory_to_csv(traj);
  write_file_bytes(path, text.data(), text.size());
}

PoseTrajectory load_trajectory(const std::string& path) {
  std::vector<char> bytes = read_file_bytes(path);
  return trajectory_from_csv(std::string(bytes.begin(), bytes.end()));
}

TrajectoryError compare_trajectories(const PoseTrajectory& estimate,
                                     const PoseTrajectory& reference) {
  if (estimate.size() != reference.size()) {
    throw Error(ErrorCode::kShapeMismatch, "compare_trajectories: length mismatch");
  }
  TrajectoryError err;
  for (int t = 0; t < estimate.size(); ++t) {
    err.translation_m.push_back(
        translation_distance(estimate.poses[t], reference.poses[t]));
    err.rotation_rad.push_back(rotation_distance(estimate.poses[t], reference.poses[t]));
  }
  if (!err.translation_m.empty()) {
    err.max_translation = *std::max_element(err.translation_m.begin(), err.translation_m.end());
    err.max_rotation = *std::max_element(err.rotation_rad.begin(), err.rotation_rad.end());
    err.mean_translation =
        std::accumulate(err.translation_m.begin(), err.translation_m.end(), 0.0) /
        err.translation_m.size();
    err.mean_rotation = std::accumulate(err.rotation_rad.begin(), err.rotation_rad.end(), 0.0) /
                        err.rotation_rad.size();
  }
  return err;
}

}  // namespace ecflow
