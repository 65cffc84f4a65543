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

#include "ecflow/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ecflow/blob_io.hpp"
#include "ecflow/errors.hpp"

namespace ecflow {

Eigen::VectorXd FlowTensor::start_slice() const {
  Eigen::VectorXd s(static_cast<Eigen::Index>(n_points) * 3);
  for (int p = 0; p < n_points; ++p)
    for (int c = 0; c < 3; ++c) s[p * 3 + c] = at(p, 0, c);
  return s;
}

void FlowTensor::set_start_slice(const Eigen::VectorXd& start) {
  if (start.size() != static_cast<Eigen::Index>(n_points) * 3) {
    throw Error(ErrorCode::kShapeMismatch, "set_start_slice: size mismatch");
  }
  for (int p = 0; p < n_points; ++p)
    for (int c = 0; c < 3; ++c) at(p, 0, c) = start[p * 3 + c];
}

void save_flow(const FlowTensor& flow, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot open " + path + " for write");
  write_u32(os, static_cast<std::uint32_t>(flow.n_points));
  write_u32(os, static_cast<std::uint32_t>(flow.horizon));
  write_u32(os, 3);
  std::vector<float> buf(flow.data.size());
  for (Eigen::Index i = 0; i < flow.data.size(); ++i) buf[i] = static_cast<float>(flow.data[i]);
  write_f32_array(os, buf.data(), buf.size());
  if (!os) throw Error(ErrorCode::kIoError, "short write on " + path);
}

FlowTensor load_flow(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::uint32_t np = read_u32(is);
  std::uint32_t t = read_u32(is);
  std::uint32_t ch = read_u32(is);
  if (ch != 3 || np == 0 || t == 0 || np > 1 << 20 || t > 1 << 16) {
    throw Error(ErrorCode::kShapeMismatch, "flow file: bad header in " + path);
  }
  FlowTensor flow(static_cast<int>(np), static_cast<int>(t));
  std::vector<float> buf(flow.data.size());
  read_f32_array(is, buf.data(), buf.size());
  for (Eigen::Index i = 0; i < flow.data.size(); ++i) flow.data[i] = buf[i];
  return flow;
}

void save_gray(const GoalImage& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot open " + path + " for write");
  write_u32(os, static_cast<std::uint32_t>(img.height));
  write_u32(os, static_cast<std::uint32_t>(img.width));
  std::vector<float> buf(img.pixels.size());
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) buf[i] = static_cast<float>(img.pixels[i]);
  write_f32_array(os, buf.data(), buf.size());
  if (!os) throw Error(ErrorCode::kIoError, "short write on " + path);
}

GoalImage load_gray(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::uint32_t h = read_u32(is);
  std::uint32_t w = read_u32(is);
  if (h == 0 || w == 0 || h > 1 << 14 || w > 1 << 14) {
    throw Error(ErrorCode::kShapeMismatch, "gray file: bad header in " + path);
  }
  GoalImage img(static_cast<int>(h), static_cast<int>(w));
  std::vector<float> buf(img.pixels.size());
  read_f32_array(is, buf.data(), buf.size());
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels[i] = buf[i];
  return img;
}

NoiseSchedule cosine_schedule(int steps) {
  if (steps < 10) throw Error(ErrorCode::kBadSteps, "cosine_schedule: steps must be >= 10");
  const double s = 0.008;
  auto f = [&](double t) {
    double x = ((t / steps + s) / (1.0 + s)) * (M_PI / 2.0);
    double c = std::cos(x);
    return c * c;
  };
  const double f0 = f(0.0);

  NoiseSchedule sched;
  sched.steps = steps;
  sched.beta = Eigen::VectorXd::Zero(steps + 1);
  sched.alpha_bar = Eigen::VectorXd::Zero(steps + 1);
  sched.alpha_bar[0] = 1.0;
  double prev_raw = 1.0;
  for (int t = 1; t <= steps; ++t) {
    double raw = f(static_cast<double>(t)) / f0;
    double beta = 1.0 - raw / prev_raw;
    beta = std::clamp(beta, 1e-6, 0.999);
    sched.beta[t] = beta;
    sched.alpha_bar[t] = sched.alpha_bar[t - 1] * (1.0 - beta);
    prev_raw = raw;
  }
  return sched;
}

FlowTensor forward_noise(const FlowTensor& z0, int t, const FlowTensor& epsilon,
                         const NoiseSchedule& schedule) {
  if (!z0.same_shape(epsilon)) {
    throw Error(ErrorCode::kShapeMismatch, "forward_noise: z0/epsilon shape mismatch");
  }
  if (t < 0 || t > schedule.steps) {
    throw Error(ErrorCode::kBadTimestep, "forward_noise: t out of [0, steps]");
  }
  const double abar = schedule.alpha_bar[t];
  const double sa = std::sqrt(abar);
  const double sn = std::sqrt(1.0 - abar);
  FlowTensor zt(z0.n_points, z0.horizon);
  zt.data = sa * z0.data + sn * epsilon.data;
  for (int p = 0; p < z0.n_points; ++p)
    for (int c = 0; c < 3; ++c) zt.at(p, 0, c) = z0.at(p, 0, c);
  return zt;
}

std::vector<int> ddim_time_subsequence(int steps, int sample_steps) {
  if (sample_steps < 1 || sample_steps > steps) {
    throw Error(ErrorCode::kBadSteps, "ddim_time_subsequence: need 1 <= sample_steps <= steps");
  }
  std::vector<int> tau(static_cast<std::size_t>(sample_steps));
  for (int i = 0; i < sample_steps; ++i) {
    tau[i] = static_cast<int>(
        std::llround(static_cast<double>(i + 1) * steps / sample_steps));
  }
  std::reverse(tau.begin(), tau.end());  // descending, tau.front() = steps
  return tau;
}

}  // namespace ecflow
