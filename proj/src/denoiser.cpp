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

#include "ecflow/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ecflow/blob_io.hpp"
#include "ecflow/errors.hpp"
#include "ecflow/rng.hpp"

namespace ecflow {

namespace {

Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& a) { return 1.0 / (1.0 + (-a).exp()); }

Eigen::VectorXd silu(const Eigen::VectorXd& a) {
  return (a.array() * sigmoid(a.array())).matrix();
}

Eigen::VectorXd silu_prime(const Eigen::VectorXd& a) {
  Eigen::ArrayXd s = sigmoid(a.array());
  return (s * (1.0 + a.array() * (1.0 - s))).matrix();
}

void check_dims(const DenoiserDims& d) {
  if (d.horizon < 2 || d.n_points < 1 || d.goal_h < 1 || d.goal_w < 1 || d.task_dim < 1 ||
      d.visual_dim < 1 || d.hidden < 1 || d.proj_dim < 1 || d.temb_dim < 2 ||
      d.temb_dim % 2 != 0 || d.schedule_steps < 10 || d.lambda < 0.0) {
    throw Error(ErrorCode::kDimensionMismatch, "denoiser dims out of range");
  }
}

}  // namespace

std::vector<ParamRef> param_refs(DenoiserParams& p) {
  auto ref = [](const char* name, auto& m, ParamGroup g) {
    return ParamRef{name, m.data(), m.size(), g};
  };
  return {
      ref("cond_w", p.cond_w, ParamGroup::kFlow),
      ref("cond_b", p.cond_b, ParamGroup::kFlow),
      ref("fc1_w", p.fc1_w, ParamGroup::kFlow),
      ref("fc1_b", p.fc1_b, ParamGroup::kFlow),
      ref("fc2_w", p.fc2_w, ParamGroup::kFlow),
      ref("fc2_b", p.fc2_b, ParamGroup::kFlow),
      ref("fc3_w", p.fc3_w, ParamGroup::kFlow),
      ref("fc3_b", p.fc3_b, ParamGroup::kFlow),
      ref("icond_w", p.icond_w, ParamGroup::kImage),
      ref("icond_b", p.icond_b, ParamGroup::kImage),
      ref("ifeat_w", p.ifeat_w, ParamGroup::kImage),
      ref("ifeat_b", p.ifeat_b, ParamGroup::kImage),
      ref("ic1_w", p.ic1_w, ParamGroup::kImage),
      ref("ic1_b", p.ic1_b, ParamGroup::kImage),
      ref("ic2_w", p.ic2_w, ParamGroup::kImage),
      ref("ic2_b", p.ic2_b, ParamGroup::kImage),
      ref("ic3_w", p.ic3_w, ParamGroup::kImage),
      ref("ic3_b", p.ic3_b, ParamGroup::kImage),
  };
}

Eigen::Index param_count(const DenoiserParams& params) {
  Eigen::Index n = 0;
  for (const ParamRef& r : param_refs(const_cast<DenoiserParams&>(params))) n += r.size;
  return n;
}

DenoiserParams init_denoiser(const DenoiserDims& dims, std::uint64_t seed) {
  check_dims(dims);
  DenoiserParams p;
  p.dims = dims;
  p.init_seed = seed;

  const int in_f = dims.flow_dim() + dims.temb_dim + dims.proj_dim;
  const int in_i = dims.img_dim() + dims.temb_dim + 2 * dims.proj_dim;

  Rng rng(derive_seed(seed, 0xDE401));
  auto randn_mat = [&](int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
    return m;
  };

  p.cond_w = randn_mat(dims.proj_dim, dims.cond_dim());
  p.cond_b = Eigen::VectorXd::Zero(dims.proj_dim);
  p.fc1_w = randn_mat(dims.hidden, in_f);
  p.fc1_b = Eigen::VectorXd::Zero(dims.hidden);
  p.fc2_w = randn_mat(dims.hidden, dims.hidden);
  p.fc2_b = Eigen::VectorXd::Zero(dims.hidden);
  p.fc3_w = randn_mat(dims.flow_dim(), dims.hidden);
  p.fc3_b = Eigen::VectorXd::Zero(dims.flow_dim());

  p.icond_w = randn_mat(dims.proj_dim, dims.cond_dim());
  p.icond_b = Eigen::VectorXd::Zero(dims.proj_dim);
  p.ifeat_w = randn_mat(dims.proj_dim, dims.flow_dim());
  p.ifeat_b = Eigen::VectorXd::Zero(dims.proj_dim);
  p.ic1_w = randn_mat(dims.hidden, in_i);
  p.ic1_b = Eigen::VectorXd::Zero(dims.hidden);
  p.ic2_w = randn_mat(dims.hidden, dims.hidden);
  p.ic2_b = Eigen::VectorXd::Zero(dims.hidden);
  p.ic3_w = randn_mat(dims.img_dim(), dims.hidden);
  p.ic3_b = Eigen::VectorXd::Zero(dims.img_dim());
  return p;
}

DenoiserParams zeros_like(const DenoiserParams& params) {
  DenoiserParams z = params;
  for (ParamRef& r : param_refs(z)) Eigen::Map<Eigen::VectorXd>(r.data, r.size).setZero();
  return z;
}

Eigen::VectorXd sinusoidal_time_embedding(int t, int dim) {
  const int half = dim / 2;
  Eigen::VectorXd emb(dim);
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    emb[2 * i] = std::sin(t * freq);
    emb[2 * i + 1] = std::cos(t * freq);
  }
  return emb;
}

Eigen::VectorXd conditioning_vector(const DenoiserDims& dims, const ConditioningBundle& cond) {
  if (cond.visual_embed.size() != dims.visual_dim || cond.task_embed.size() != dims.task_dim ||
      cond.start_points.size() != static_cast<Eigen::Index>(dims.n_points) * 3) {
    throw Error(ErrorCode::kHeaderMismatch, "conditioning dims disagree with model header");
  }
  Eigen::VectorXd c(dims.cond_dim());
  c << cond.visual_embed, cond.task_embed, cond.start_points;
  return c;
}

namespace {

struct FlowCache {
  Eigen::VectorXd condvec, condp, xin, a1, h1, a2, h2, eps;
};

struct ImageCache {
  Eigen::VectorXd condpi, feat, yin, b1, g1, b2, g2, epsi;
};

FlowCache flow_forward(const DenoiserParams& p, const Eigen::VectorXd& z_flat, int t,
                       const Eigen::VectorXd& condvec) {
  const DenoiserDims& d = p.dims;
  FlowCache c;
  c.condvec = condvec;
  c.condp = p.cond_w * condvec + p.cond_b;
  c.xin.resize(d.flow_dim() + d.temb_dim + d.proj_dim);
  c.xin << z_flat, sinusoidal_time_embedding(t, d.temb_dim), c.condp;
  c.a1 = p.fc1_w * c.xin + p.fc1_b;
  c.h1 = silu(c.a1);
  c.a2 = p.fc2_w * c.h1 + p.fc2_b;
  c.h2 = silu(c.a2);
  c.eps = p.fc3_w * c.h2 + p.fc3_b;
  return c;
}

ImageCache image_forward(const DenoiserParams& p, const Eigen::VectorXd& x_flat, int t,
                         const Eigen::VectorXd& condvec, const Eigen::VectorXd& eps_flow) {
  const DenoiserDims& d = p.dims;
  ImageCache c;
  c.condpi = p.icond_w * condvec + p.icond_b;
  c.feat = p.ifeat_w * eps_flow + p.ifeat_b;
  c.yin.resize(d.img_dim() + d.temb_dim + 2 * d.proj_dim);
  c.yin << x_flat, sinusoidal_time_embedding(t, d.temb_dim), c.condpi, c.feat;
  c.b1 = p.ic1_w * c.yin + p.ic1_b;
  c.g1 = silu(c.b1);
  c.b2 = p.ic2_w * c.g1 + p.ic2_b;
  c.g2 = silu(c.b2);
  c.epsi = p.ic3_w * c.g2 + p.ic3_b;
  return c;
}

}  // namespace

Eigen::VectorXd flow_eps(const DenoiserParams& params, const Eigen::VectorXd& z_flat, int t,
                         const ConditioningBundle& cond) {
  if (z_flat.size() != params.dims.flow_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "flow_eps: input size mismatch");
  }
  return flow_forward(params, z_flat, t, conditioning_vector(params.dims, cond)).eps;
}

Eigen::VectorXd image_eps(const DenoiserParams& params, const Eigen::VectorXd& x_flat, int t,
                          const ConditioningBundle& cond, const Eigen::VectorXd& eps_flow) {
  if (x_flat.size() != params.dims.img_dim() || eps_flow.size() != params.dims.flow_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "image_eps: input size mismatch");
  }
  return image_forward(params, x_flat, t, conditioning_vector(params.dims, cond), eps_flow).epsi;
}

LossValue training_loss(const DenoiserParams& params, const TrainSample& sample, int t,
                        const FlowTensor& eps_flow, const Eigen::VectorXd& eps_img, double lambda,
                        const NoiseSchedule& schedule, DenoiserParams* grads) {
  const DenoiserDims& d = params.dims;
  if (sample.flow.n_points != d.n_points || sample.flow.horizon != d.horizon ||
      !sample.flow.same_shape(eps_flow) || eps_img.size() != d.img_dim() ||
      sample.goal.pixels.size() != d.img_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "training_loss: sample shape disagrees with model");
  }
  const double abar = schedule.alpha_bar[t];
  const double sa = std::sqrt(abar);
  const double sn = std::sqrt(1.0 - abar);

  FlowTensor z_t = forward_noise(sample.flow, t, eps_flow, schedule);
  Eigen::VectorXd x_t = sa * sample.goal.pixels + sn * eps_img;

  Eigen::VectorXd condvec = conditioning_vector(d, sample.cond);
  FlowCache fc = flow_forward(params, z_t.data, t, condvec);
  ImageCache ic = image_forward(params, x_t, t, condvec, fc.eps);

  // Frame-0 flow entries carry no noise target and are excluded from the mean.
  const int nf = d.n_points * (d.horizon - 1) * 3;
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(d.flow_dim());
  for (int p = 0; p < d.n_points; ++p)
    for (int c = 0; c < 3; ++c) mask[sample.flow.flat_index(p, 0, c)] = 0.0;

  Eigen::VectorXd diff_f = (fc.eps - eps_flow.data).cwiseProduct(mask);
  Eigen::VectorXd diff_i = ic.epsi - eps_img;

  LossValue lv;
  lv.flow = diff_f.squaredNorm() / nf;
  lv.image = diff_i.squaredNorm() / d.img_dim();
  lv.total = lv.flow + lambda * lv.image;
  if (!std::isfinite(lv.total)) {
    throw Error(ErrorCode::kNonfiniteLoss, "training_loss: non-finite loss");
  }
  if (grads == nullptr) return lv;

  // image branch backward
  Eigen::VectorXd d_epsi = (2.0 * lambda / d.img_dim()) * diff_i;
  grads->ic3_w = d_epsi * ic.g2.transpose();
  grads->ic3_b = d_epsi;
  Eigen::VectorXd d_b2 = (params.ic3_w.transpose() * d_epsi).cwiseProduct(silu_prime(ic.b2));
  grads->ic2_w = d_b2 * ic.g1.transpose();
  grads->ic2_b = d_b2;
  Eigen::VectorXd d_b1 = (params.ic2_w.transpose() * d_b2).cwiseProduct(silu_prime(ic.b1));
  grads->ic1_w = d_b1 * ic.yin.transpose();
  grads->ic1_b = d_b1;
  Eigen::VectorXd d_yin = params.ic1_w.transpose() * d_b1;
  Eigen::VectorXd d_condpi = d_yin.segment(d.img_dim() + d.temb_dim, d.proj_dim);
  Eigen::VectorXd d_feat = d_yin.segment(d.img_dim() + d.temb_dim + d.proj_dim, d.proj_dim);
  grads->icond_w = d_condpi * condvec.transpose();
  grads->icond_b = d_condpi;
  grads->ifeat_w = d_feat * fc.eps.transpose();
  grads->ifeat_b = d_feat;

  // flow branch backward; the image loss reaches it through the feature
  // projection of the flow prediction
  Eigen::VectorXd d_eps = (2.0 / nf) * diff_f + params.ifeat_w.transpose() * d_feat;
  grads->fc3_w = d_eps * fc.h2.transpose();
  grads->fc3_b = d_eps;
  Eigen::VectorXd d_a2 = (params.fc3_w.transpose() * d_eps).cwiseProduct(silu_prime(fc.a2));
  grads->fc2_w = d_a2 * fc.h1.transpose();
  grads->fc2_b = d_a2;
  Eigen::VectorXd d_a1 = (params.fc2_w.transpose() * d_a2).cwiseProduct(silu_prime(fc.a1));
  grads->fc1_w = d_a1 * fc.xin.transpose();
  grads->fc1_b = d_a1;
  Eigen::VectorXd d_xin = params.fc1_w.transpose() * d_a1;
  Eigen::VectorXd d_condp = d_xin.segment(d.flow_dim() + d.temb_dim, d.proj_dim);
  grads->cond_w = d_condp * condvec.transpose();
  grads->cond_b = d_condp;
  grads->dims = d;
  return lv;
}

std::vector<double> train(DenoiserParams& params, const std::vector<TrainSample>& dataset,
                          const NoiseSchedule& schedule, const TrainOptions& opts) {
  if (dataset.empty()) throw Error(ErrorCode::kEmptyDataset, "train: empty dataset");
  const DenoiserDims& d = params.dims;
  const int n = static_cast<int>(dataset.size());
  const int batch = std::max(1, std::min(opts.batch, n));

  DenoiserParams grad_accum = zeros_like(params);
  DenoiserParams adam_m = zeros_like(params);
  DenoiserParams adam_v = zeros_like(params);
  std::vector<DenoiserParams> slots(batch);
  std::vector<double> item_loss(batch, 0.0);

  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  long step_k = 0;
  std::vector<double> curve;
  curve.reserve(opts.epochs);

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(opts.seed, static_cast<std::uint64_t>(epoch), 0x5151));
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(shuffle_rng.uniform_int(0, i));
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += batch) {
      const int bsz = std::min(batch, n - start);
      parallel_for(bsz, opts.exec, [&](int i) {
        const TrainSample& s = dataset[order[start + i]];
        Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(epoch),
                            static_cast<std::uint64_t>(start + i)));
        int t = static_cast<int>(rng.uniform_int(1, schedule.steps));
        FlowTensor eps_f(d.n_points, d.horizon);
        for (Eigen::Index k = 0; k < eps_f.data.size(); ++k) eps_f.data[k] = rng.normal();
        Eigen::VectorXd eps_i(d.img_dim());
        for (Eigen::Index k = 0; k < eps_i.size(); ++k) eps_i[k] = rng.normal();
        LossValue lv =
            training_loss(params, s, t, eps_f, eps_i, d.lambda, schedule, &slots[i]);
        item_loss[i] = lv.total;
      });

      // fixed-order reduction keeps results identical across worker counts
      auto acc_refs = param_refs(grad_accum);
      for (ParamRef& r : acc_refs) Eigen::Map<Eigen::VectorXd>(r.data, r.size).setZero();
      for (int i = 0; i < bsz; ++i) {
        auto slot_refs = param_refs(slots[i]);
        for (std::size_t r = 0; r < acc_refs.size(); ++r) {
          Eigen::Map<Eigen::VectorXd>(acc_refs[r].data, acc_refs[r].size) +=
              Eigen::Map<const Eigen::VectorXd>(slot_refs[r].data, slot_refs[r].size);
        }
        epoch_loss += item_loss[i];
      }
      const double inv_b = 1.0 / bsz;

      ++step_k;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_k));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_k));
      auto p_refs = param_refs(params);
      auto m_refs = param_refs(adam_m);
      auto v_refs = param_refs(adam_v);
      for (std::size_t r = 0; r < p_refs.size(); ++r) {
        Eigen::Map<Eigen::VectorXd> p(p_refs[r].data, p_refs[r].size);
        Eigen::Map<Eigen::VectorXd> m(m_refs[r].data, m_refs[r].size);
        Eigen::Map<Eigen::VectorXd> v(v_refs[r].data, v_refs[r].size);
        Eigen::Map<const Eigen::VectorXd> g_raw(acc_refs[r].data, acc_refs[r].size);
        Eigen::ArrayXd g = g_raw.array() * inv_b;
        m.array() = beta1 * m.array() + (1.0 - beta1) * g;
        v.array() = beta2 * v.array() + (1.0 - beta2) * g.square();
        const double lr = p_refs[r].group == ParamGroup::kFlow ? opts.lr_flow : opts.lr_image;
        p.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + adam_eps) +
                           opts.weight_decay * p.array());
      }
    }

    epoch_loss /= n;
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::kNonfiniteLoss, "train: non-finite epoch loss");
    }
    if (epoch_loss > 1e6) {
      throw Error(ErrorCode::kDivergedLoss, "train: loss exceeded 1e6");
    }
    curve.push_back(epoch_loss);
  }
  return curve;
}

std::pair<FlowTensor, GoalImage> ddim_sample_with(const DenoiseFn& denoise,
                                                  const ConditioningBundle& cond, int n_points,
                                                  int horizon, int goal_h, int goal_w,
                                                  const NoiseSchedule& schedule, int sample_steps,
                                                  std::uint64_t seed) {
  if (cond.start_points.size() != static_cast<Eigen::Index>(n_points) * 3) {
    throw Error(ErrorCode::kHeaderMismatch, "ddim_sample: start_points size mismatch");
  }
  FlowTensor z(n_points, horizon);
  GoalImage img(goal_h, goal_w);

  Rng rng(seed);
  for (Eigen::Index i = 0; i < z.data.size(); ++i) z.data[i] = rng.normal();
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels[i] = rng.normal();
  z.set_start_slice(cond.start_points);

  Eigen::VectorXd x = img.pixels;
  std::vector<int> tau = ddim_time_subsequence(schedule.steps, sample_steps);
  Eigen::VectorXd eps_f, eps_i;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const int t = tau[i];
    const int t_prev = i + 1 < tau.size() ? tau[i + 1] : 0;
    const double abar = schedule.alpha_bar[t];
    const double abar_prev = schedule.alpha_bar[t_prev];

    denoise(z.data, x, t, &eps_f, &eps_i);

    Eigen::VectorXd z0_hat = (z.data - std::sqrt(1.0 - abar) * eps_f) / std::sqrt(abar);
    z.data = std::sqrt(abar_prev) * z0_hat + std::sqrt(1.0 - abar_prev) * eps_f;
    Eigen::VectorXd x0_hat = (x - std::sqrt(1.0 - abar) * eps_i) / std::sqrt(abar);
    x = std::sqrt(abar_prev) * x0_hat + std::sqrt(1.0 - abar_prev) * eps_i;

    z.set_start_slice(cond.start_points);
  }

  for (int p = 0; p < n_points; ++p)
    for (int t = 0; t < horizon; ++t)
      z.at(p, t, 2) = std::clamp(z.at(p, t, 2), 0.0, 1.0);
  img.pixels = x.cwiseMax(0.0).cwiseMin(1.0);
  return {std::move(z), std::move(img)};
}

std::pair<FlowTensor, GoalImage> ddim_sample(const DenoiserParams& params,
                                             const ConditioningBundle& cond,
                                             const NoiseSchedule& schedule, int sample_steps,
                                             std::uint64_t seed) {
  const DenoiserDims& d = params.dims;
  Eigen::VectorXd condvec = conditioning_vector(d, cond);  // header check
  DenoiseFn fn = [&](const Eigen::VectorXd& z_flat, const Eigen::VectorXd& x_flat, int t,
                     Eigen::VectorXd* eps_flow_out, Eigen::VectorXd* eps_img_out) {
    FlowCache fc = flow_forward(params, z_flat, t, condvec);
    ImageCache ic = image_forward(params, x_flat, t, condvec, fc.eps);
    *eps_flow_out = std::move(fc.eps);
    *eps_img_out = std::move(ic.epsi);
  };
  return ddim_sample_with(fn, cond, d.n_points, d.horizon, d.goal_h, d.goal_w, schedule,
                          sample_steps, seed);
}

void save_model(const DenoiserParams& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot open " + path + " for write");
  os.write("ECF1", 4);
  const DenoiserDims& d = params.dims;
  write_u32(os, 1);  // format version
  write_u32(os, static_cast<std::uint32_t>(d.horizon));
  write_u32(os, static_cast<std::uint32_t>(d.n_points));
  write_u32(os, static_cast<std::uint32_t>(d.goal_h));
  write_u32(os, static_cast<std::uint32_t>(d.goal_w));
  write_u32(os, static_cast<std::uint32_t>(d.task_dim));
  write_u32(os, static_cast<std::uint32_t>(d.visual_dim));
  write_u32(os, static_cast<std::uint32_t>(d.hidden));
  write_u32(os, static_cast<std::uint32_t>(d.temb_dim));
  write_u32(os, static_cast<std::uint32_t>(d.proj_dim));
  write_u32(os, static_cast<std::uint32_t>(d.schedule_steps));
  write_f64(os, d.lambda);
  write_f64(os, params.cosine_s);
  write_f64(os, params.eta);
  write_u32(os, static_cast<std::uint32_t>(params.init_seed & 0xffffffffu));
  write_u32(os, static_cast<std::uint32_t>(params.init_seed >> 32));
  for (const ParamRef& r : param_refs(const_cast<DenoiserParams&>(params))) {
    std::vector<float> buf(static_cast<std::size_t>(r.size));
    for (Eigen::Index i = 0; i < r.size; ++i) buf[i] = static_cast<float>(r.data[i]);
    write_f32_array(os, buf.data(), buf.size());
  }
  if (!os) throw Error(ErrorCode::kIoError, "short write on " + path);
}

DenoiserParams load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "ECF1") {
    throw Error(ErrorCode::kHeaderMismatch, "model file: bad magic in " + path);
  }
  std::uint32_t version = read_u32(is);
  if (version != 1) {
    throw Error(ErrorCode::kHeaderMismatch, "model file: unsupported version");
  }
  DenoiserDims d;
  d.horizon = static_cast<int>(read_u32(is));
  d.n_points = static_cast<int>(read_u32(is));
  d.goal_h = static_cast<int>(read_u32(is));
  d.goal_w = static_cast<int>(read_u32(is));
  d.task_dim = static_cast<int>(read_u32(is));
  d.visual_dim = static_cast<int>(read_u32(is));
  d.hidden = static_cast<int>(read_u32(is));
  d.temb_dim = static_cast<int>(read_u32(is));
  d.proj_dim = static_cast<int>(read_u32(is));
  d.schedule_steps = static_cast<int>(read_u32(is));
  d.lambda = read_f64(is);
  double cosine_s = read_f64(is);
  double eta = read_f64(is);
  std::uint64_t lo = read_u32(is);
  std::uint64_t hi = read_u32(is);

  DenoiserParams p = init_denoiser(d, 0);
  p.cosine_s = cosine_s;
  p.eta = eta;
  p.init_seed = lo | (hi << 32);
  for (ParamRef& r : param_refs(p)) {
    std::vector<float> buf(static_cast<std::size_t>(r.size));
    read_f32_array(is, buf.data(), buf.size());
    for (Eigen::Index i = 0; i < r.size; ++i) r.data[i] = buf[i];
  }
  return p;
}

}  // namespace ecflow
