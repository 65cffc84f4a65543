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

#ifndef ECFLOW_DENOISER_HPP_
#define ECFLOW_DENOISER_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ecflow/diffusion.hpp"
#include "ecflow/parallel.hpp"

namespace ecflow {

struct ConditioningBundle {
  Eigen::VectorXd visual_embed;  // flattened initial gray frame
  Eigen::VectorXd task_embed;    // one-hot task id, padded
  Eigen::VectorXd start_points;  // frame-0 flow slice, s[p*3 + c]
};

struct DenoiserDims {
  int horizon = 8;
  int n_points = 64;
  int goal_h = 16, goal_w = 16;
  int task_dim = 8;
  int visual_dim = 256;
  int hidden = 256;
  int temb_dim = 64;
  int proj_dim = 64;
  int schedule_steps = 250;
  double lambda = 0.4;

  int flow_dim() const { return n_points * horizon * 3; }
  int img_dim() const { return goal_h * goal_w; }
  int cond_dim() const { return visual_dim + task_dim + 3 * n_points; }

  bool operator==(const DenoiserDims&) const = default;
};

// Two-branch feed-forward denoiser. The flow branch maps the noised flow plus
// timestep embedding and projected conditioning to predicted flow noise; the
// image branch does the same for the goal image, with the flow branch's
// current prediction appended to its conditioning, which is what couples the
// two losses during co-training.
struct DenoiserParams {
  DenoiserDims dims;
  double cosine_s = 0.008;
  double eta = 0.0;  // DDIM stochasticity; deterministic sampler
  std::uint64_t init_seed = 0;

  // flow branch
  Eigen::MatrixXd cond_w;
  Eigen::VectorXd cond_b;
  Eigen::MatrixXd fc1_w;
  Eigen::VectorXd fc1_b;
  Eigen::MatrixXd fc2_w;
  Eigen::VectorXd fc2_b;
  Eigen::MatrixXd fc3_w;
  Eigen::VectorXd fc3_b;
  // image branch
  Eigen::MatrixXd icond_w;
  Eigen::VectorXd icond_b;
  Eigen::MatrixXd ifeat_w;
  Eigen::VectorXd ifeat_b;
  Eigen::MatrixXd ic1_w;
  Eigen::VectorXd ic1_b;
  Eigen::MatrixXd ic2_w;
  Eigen::VectorXd ic2_b;
  Eigen::MatrixXd ic3_w;
  Eigen::VectorXd ic3_b;
};

enum class ParamGroup { kFlow, kImage };

struct ParamRef {
  const char* name;
  double* data;
  Eigen::Index size;
  ParamGroup group;
};

// Parameter blocks in declared (serialization) order.
std::vector<ParamRef> param_refs(DenoiserParams& params);
Eigen::Index param_count(const DenoiserParams& params);

DenoiserParams init_denoiser(const DenoiserDims& dims, std::uint64_t seed);
DenoiserParams zeros_like(const DenoiserParams& params);

Eigen::VectorXd sinusoidal_time_embedding(int t, int dim);
Eigen::VectorXd conditioning_vector(const DenoiserDims& dims, const ConditioningBundle& cond);

// Forward evaluations (pure; concurrently callable on shared params).
Eigen::VectorXd flow_eps(const DenoiserParams& params, const Eigen::VectorXd& z_flat, int t,
                         const ConditioningBundle& cond);
Eigen::VectorXd image_eps(const DenoiserParams& params, const Eigen::VectorXd& x_flat, int t,
                          const ConditioningBundle& cond, const Eigen::VectorXd& eps_flow);

struct TrainSample {
  FlowTensor flow;  // normalized ground-truth tensor
  GoalImage goal;
  ConditioningBundle cond;
};

struct LossValue {
  double total = 0.0;
  double flow = 0.0;
  double image = 0.0;
};

// Co-training loss at a fixed timestep and fixed noise draws: L_flow is the
// mean squared flow-noise error with the frame-0 slice excluded, L_image the
// mean squared image-noise error, total = L_flow + lambda * L_image. Returns
// exact reverse-mode gradients for every parameter (grads has the same shape
// as params).
LossValue training_loss(const DenoiserParams& params, const TrainSample& sample, int t,
                        const FlowTensor& eps_flow, const Eigen::VectorXd& eps_img, double lambda,
                        const NoiseSchedule& schedule, DenoiserParams* grads);

struct TrainOptions {
  int epochs = 100;
  double lr_flow = 5e-5;
  double lr_image = 1e-4;
  int batch = 56;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  ExecConfig exec = ExecConfig::serial();
};

// AdamW over both branches with separate learning rates. Deterministic per
// seed, independent of worker count (per-sample noise comes from derived
// substreams and gradients reduce in batch order). Returns the per-epoch mean
// training loss.
std::vector<double> train(DenoiserParams& params, const std::vector<TrainSample>& dataset,
                          const NoiseSchedule& schedule, const TrainOptions& opts);

// Denoiser hook for sampling: fills eps_flow (and eps_img when non-null) at
// diffusion time t.
using DenoiseFn =
    std::function<void(const Eigen::VectorXd& z_flat, const Eigen::VectorXd& x_flat, int t,
                       Eigen::VectorXd* eps_flow, Eigen::VectorXd* eps_img)>;

// Deterministic DDIM (eta = 0) over an evenly spaced time subsequence. The
// frame-0 flow slice is overwritten with cond.start_points after every update,
// so the returned tensor carries the start state byte-exactly. Visibility and
// goal-image channels are clamped to [0,1] on output.
std::pair<FlowTensor, GoalImage> ddim_sample_with(const DenoiseFn& denoise,
                                                  const ConditioningBundle& cond, int n_points,
                                                  int horizon, int goal_h, int goal_w,
                                                  const NoiseSchedule& schedule, int sample_steps,
                                                  std::uint64_t seed);

std::pair<FlowTensor, GoalImage> ddim_sample(const DenoiserParams& params,
                                             const ConditioningBundle& cond,
                                             const NoiseSchedule& schedule, int sample_steps,
                                             std::uint64_t seed);

// Model file: magic "ECF1", little-endian header with every dimension and
// schedule constant, then float32 parameter blocks in param_refs order.
void save_model(const DenoiserParams& params, const std::string& path);
DenoiserParams load_model(const std::string& path);

}  // namespace ecflow

#endif  // ECFLOW_DENOISER_HPP_
