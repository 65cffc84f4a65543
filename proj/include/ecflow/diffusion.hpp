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

#ifndef ECFLOW_DIFFUSION_HPP_
#define ECFLOW_DIFFUSION_HPP_

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ecflow {

// Point-flow tensor: n_points x horizon x 3, channels (u_norm, v_norm,
// visibility). Pixel coordinates are stored normalized by image width/height.
// Layout: index(p, t, c) = (p * horizon + t) * 3 + c.
struct FlowTensor {
  int n_points = 0;
  int horizon = 0;
  Eigen::VectorXd data;

  FlowTensor() = default;
  FlowTensor(int np, int t) : n_points(np), horizon(t) {
    data = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np) * t * 3);
  }

  Eigen::Index flat_index(int p, int t, int c) const {
    return (static_cast<Eigen::Index>(p) * horizon + t) * 3 + c;
  }
  double at(int p, int t, int c) const { return data[flat_index(p, t, c)]; }
  double& at(int p, int t, int c) { return data[flat_index(p, t, c)]; }

  // Frame-0 slice as a packed vector s[p*3 + c], the conditioning start state.
  Eigen::VectorXd start_slice() const;
  void set_start_slice(const Eigen::VectorXd& start);

  bool same_shape(const FlowTensor& other) const {
    return n_points == other.n_points && horizon == other.horizon;
  }
};

// flow.bin: u32 n_points, u32 horizon, u32 channels (= 3), float32 data in
// tensor layout order.
void save_flow(const FlowTensor& flow, const std::string& path);
FlowTensor load_flow(const std::string& path);

struct GoalImage {
  int height = 0;
  int width = 0;
  Eigen::VectorXd pixels;  // row major, gray in [0,1]

  GoalImage() = default;
  GoalImage(int h, int w) : height(h), width(w) {
    pixels = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h) * w);
  }
  double at(int r, int c) const { return pixels[static_cast<Eigen::Index>(r) * width + c]; }
  double& at(int r, int c) { return pixels[static_cast<Eigen::Index>(r) * width + c]; }
};

// Same container format as depth maps: u32 height, u32 width, float32 pixels.
void save_gray(const GoalImage& img, const std::string& path);
GoalImage load_gray(const std::string& path);

struct NoiseSchedule {
  int steps = 0;                // diffusion step count
  Eigen::VectorXd beta;         // size steps+1; beta[0] unused (= 0)
  Eigen::VectorXd alpha_bar;    // size steps+1; alpha_bar[0] = 1
};

// Squared-cosine schedule with offset s = 0.008. beta is clipped to
// [1e-6, 0.999] and alpha_bar is rebuilt from the clipped betas, so the two
// stay definitionally consistent.
NoiseSchedule cosine_schedule(int steps);

// Closed-form forward corruption z_t = sqrt(abar_t) z0 + sqrt(1-abar_t) eps.
// The frame-0 slice is never corrupted: it passes through equal to z0's
// frame 0 (start-state clamping; the added noise there is defined as zero).
FlowTensor forward_noise(const FlowTensor& z0, int t, const FlowTensor& epsilon,
                         const NoiseSchedule& schedule);

// Evenly spaced descending sub-sequence of diffusion times in [1, steps],
// ending at the full-noise step; used by the DDIM loop. Size = sample_steps.
std::vector<int> ddim_time_subsequence(int steps, int sample_steps);

}  // namespace ecflow

#endif  // ECFLOW_DIFFUSION_HPP_
