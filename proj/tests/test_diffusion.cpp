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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "ecflow/denoiser.hpp"
#include "ecflow/diffusion.hpp"
#include "ecflow/errors.hpp"
#include "test_util.hpp"

using namespace ecflow;

namespace {

FlowTensor random_flow(int np, int t, Rng& rng, double lo = 0.0, double hi = 1.0) {
  FlowTensor f(np, t);
  for (Eigen::Index i = 0; i < f.data.size(); ++i) f.data[i] = rng.uniform(lo, hi);
  return f;
}

FlowTensor gaussian_flow(int np, int t, Rng& rng) {
  FlowTensor f(np, t);
  for (Eigen::Index i = 0; i < f.data.size(); ++i) f.data[i] = rng.normal();
  return f;
}

}  // namespace

TEST_CASE("cosine schedule satisfies its own definition") {
  for (int steps : {10, 50, 250, 1000}) {
    NoiseSchedule s = cosine_schedule(steps);
    REQUIRE(s.steps == steps);
    REQUIRE(s.beta.size() == steps + 1);
    REQUIRE(s.alpha_bar.size() == steps + 1);
    CHECK(s.beta[0] == 0.0);
    CHECK(s.alpha_bar[0] == 1.0);

    double prod = 1.0;
    for (int t = 1; t <= steps; ++t) {
      CHECK(s.beta[t] >= 1e-6);
      CHECK(s.beta[t] <= 0.999);
      prod *= 1.0 - s.beta[t];
      // alpha_bar rebuilt from the clipped betas
      CHECK(std::abs(s.alpha_bar[t] - prod) < 1e-12);
      CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    }
    // late schedule is nearly pure noise
    CHECK(s.alpha_bar[steps] < 0.05);
  }
}

TEST_CASE("cosine schedule rejects bad step counts") {
  for (int steps : {0, -5, 3}) {
    try {
      cosine_schedule(steps);
      FAIL("expected BadSteps");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kBadSteps);
    }
  }
}

TEST_CASE("forward noise reproduces the closed form and clamps frame 0") {
  NoiseSchedule s = cosine_schedule(100);
  Rng rng(4);
  FlowTensor z0 = random_flow(6, 5, rng);
  FlowTensor eps = gaussian_flow(6, 5, rng);

  for (int t : {1, 17, 50, 100}) {
    FlowTensor zt = forward_noise(z0, t, eps, s);
    double a = std::sqrt(s.alpha_bar[t]);
    double b = std::sqrt(1.0 - s.alpha_bar[t]);
    for (int p = 0; p < 6; ++p) {
      for (int f = 0; f < 5; ++f) {
        for (int c = 0; c < 3; ++c) {
          if (f == 0) {
            // start state passes through bit-exactly at every timestep
            CHECK(zt.at(p, 0, c) == z0.at(p, 0, c));
          } else {
            double want = a * z0.at(p, f, c) + b * eps.at(p, f, c);
            CHECK(zt.at(p, f, c) == doctest::Approx(want).epsilon(1e-14));
          }
        }
      }
    }
  }
}

TEST_CASE("forward noise validates inputs") {
  NoiseSchedule s = cosine_schedule(50);
  Rng rng(8);
  FlowTensor z0 = random_flow(3, 4, rng);
  FlowTensor eps = gaussian_flow(3, 4, rng);
  // t = 0 is the clean end of the chain: identity
  FlowTensor same = forward_noise(z0, 0, eps, s);
  CHECK((same.data.array() == z0.data.array()).all());
  try {
    forward_noise(z0, -1, eps, s);
    FAIL("expected BadTimestep");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadTimestep);
  }
  try {
    forward_noise(z0, 51, eps, s);
    FAIL("expected BadTimestep");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadTimestep);
  }
  FlowTensor small = random_flow(3, 3, rng);
  try {
    forward_noise(z0, 5, small, s);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kShapeMismatch);
  }
}

TEST_CASE("forward marginal variance tracks 1 - alpha_bar") {
  NoiseSchedule s = cosine_schedule(100);
  Rng rng(12);
  FlowTensor z0 = random_flow(2, 3, rng);
  const int draws = 10000;
  for (int t : {5, 40, 100}) {
    double a = std::sqrt(s.alpha_bar[t]);
    // watch one late-frame coordinate across noise draws
    double sum = 0.0, sum2 = 0.0;
    for (int d = 0; d < draws; ++d) {
      FlowTensor eps = gaussian_flow(2, 3, rng);
      FlowTensor zt = forward_noise(z0, t, eps, s);
      double centered = zt.at(1, 2, 0) - a * z0.at(1, 2, 0);
      sum += centered;
      sum2 += centered * centered;
    }
    double mean = sum / draws;
    double var = sum2 / draws - mean * mean;
    double want = 1.0 - s.alpha_bar[t];
    CHECK(std::abs(var - want) < 0.05 * want);
  }
}

TEST_CASE("ddim time subsequence is descending and spans the schedule") {
  for (int steps : {50, 250}) {
    for (int sub : {1, 5, steps / 2, steps}) {
      std::vector<int> ts = ddim_time_subsequence(steps, sub);
      REQUIRE(int(ts.size()) == sub);
      CHECK(ts.front() == steps);
      for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
      CHECK(ts.back() >= 1);
    }
  }
  // full subsequence is exactly steps..1
  std::vector<int> full = ddim_time_subsequence(20, 20);
  for (int i = 0; i < 20; ++i) CHECK(full[i] == 20 - i);

  try {
    ddim_time_subsequence(50, 51);
    FAIL("expected BadSteps");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadSteps);
  }
  try {
    ddim_time_subsequence(50, 0);
    FAIL("expected BadSteps");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadSteps);
  }
}

TEST_CASE("ddim with an oracle denoiser reconstructs the clean tensor") {
  // When the denoiser returns the exact noise that links z_t to a fixed z0,
  // deterministic DDIM must walk back to that z0.
  const int np = 4, horizon = 5, gh = 3, gw = 3;
  NoiseSchedule s = cosine_schedule(50);
  Rng rng(33);
  FlowTensor z0 = random_flow(np, horizon, rng, 0.1, 0.9);
  Eigen::VectorXd img0(gh * gw);
  for (int i = 0; i < img0.size(); ++i) img0[i] = rng.uniform(0.1, 0.9);

  ConditioningBundle cond;
  cond.visual_embed = Eigen::VectorXd::Zero(4);
  cond.task_embed = Eigen::VectorXd::Zero(2);
  cond.start_points = z0.start_slice();

  auto cheat = [&](const Eigen::VectorXd& z_flat, const Eigen::VectorXd& x_flat, int t,
                   Eigen::VectorXd* eps_flow, Eigen::VectorXd* eps_img) {
    double a = std::sqrt(s.alpha_bar[t]);
    double b = std::sqrt(1.0 - s.alpha_bar[t]);
    *eps_flow = (z_flat - a * z0.data) / b;
    if (eps_img) *eps_img = (x_flat - a * img0) / b;
  };

  for (int sample_steps : {50, 25, 10}) {
    auto [flow, goal] = ddim_sample_with(cheat, cond, np, horizon, gh, gw, s, sample_steps, 99);
    REQUIRE(flow.n_points == np);
    REQUIRE(flow.horizon == horizon);
    double max_err = 0.0;
    for (Eigen::Index i = 0; i < flow.data.size(); ++i)
      max_err = std::max(max_err, std::abs(flow.data[i] - z0.data[i]));
    for (int i = 0; i < img0.size(); ++i)
      max_err = std::max(max_err, std::abs(goal.pixels[i] - img0[i]));
    // full-length replay is exact; strided replay stays exact because the
    // oracle noise is self-consistent across times
    CHECK(max_err < 1e-6);
    // frame 0 equals the conditioning start bytes
    Eigen::VectorXd start = flow.start_slice();
    for (int i = 0; i < start.size(); ++i) CHECK(start[i] == cond.start_points[i]);
  }
}

TEST_CASE("ddim output clamps visibility and goal channels") {
  const int np = 3, horizon = 4, gh = 2, gw = 2;
  NoiseSchedule s = cosine_schedule(20);
  ConditioningBundle cond;
  cond.visual_embed = Eigen::VectorXd::Zero(2);
  cond.task_embed = Eigen::VectorXd::Zero(2);
  cond.start_points = Eigen::VectorXd::Constant(np * 3, 0.5);

  // denoiser that pushes everything far out of range
  auto wild = [&](const Eigen::VectorXd& z_flat, const Eigen::VectorXd& x_flat, int t,
                  Eigen::VectorXd* eps_flow, Eigen::VectorXd* eps_img) {
    *eps_flow = Eigen::VectorXd::Constant(z_flat.size(), -40.0);
    if (eps_img) *eps_img = Eigen::VectorXd::Constant(x_flat.size(), 40.0);
  };
  auto [flow, goal] = ddim_sample_with(wild, cond, np, horizon, gh, gw, s, 10, 5);
  for (int p = 0; p < np; ++p) {
    for (int t = 0; t < horizon; ++t) {
      CHECK(flow.at(p, t, 2) >= 0.0);
      CHECK(flow.at(p, t, 2) <= 1.0);
    }
  }
  for (int i = 0; i < goal.pixels.size(); ++i) {
    CHECK(goal.pixels[i] >= 0.0);
    CHECK(goal.pixels[i] <= 1.0);
  }
  // start slice survives the clamping byte-exactly
  Eigen::VectorXd start = flow.start_slice();
  for (int i = 0; i < start.size(); ++i) CHECK(start[i] == 0.5);
}

TEST_CASE("ddim sampling is deterministic per seed") {
  DenoiserDims dims;
  dims.n_points = 4;
  dims.horizon = 3;
  dims.goal_h = 2;
  dims.goal_w = 2;
  dims.task_dim = 2;
  dims.visual_dim = 4;
  dims.hidden = 8;
  dims.temb_dim = 4;
  dims.proj_dim = 4;
  dims.schedule_steps = 20;
  DenoiserParams params = init_denoiser(dims, 7);
  NoiseSchedule s = cosine_schedule(dims.schedule_steps);
  ConditioningBundle cond;
  cond.visual_embed = Eigen::VectorXd::Constant(4, 0.3);
  cond.task_embed = Eigen::VectorXd::Unit(2, 1);
  cond.start_points = Eigen::VectorXd::Constant(12, 0.4);

  auto [f1, g1] = ddim_sample(params, cond, s, 10, 42);
  auto [f2, g2] = ddim_sample(params, cond, s, 10, 42);
  auto [f3, g3] = ddim_sample(params, cond, s, 10, 43);
  CHECK((f1.data.array() == f2.data.array()).all());
  CHECK((g1.pixels.array() == g2.pixels.array()).all());
  CHECK_FALSE((f1.data.array() == f3.data.array()).all());
}

TEST_CASE("flow tensor slice helpers and io round trip") {
  Rng rng(3);
  FlowTensor f = random_flow(5, 4, rng);
  Eigen::VectorXd start = f.start_slice();
  REQUIRE(start.size() == 15);
  for (int p = 0; p < 5; ++p)
    for (int c = 0; c < 3; ++c) CHECK(start[p * 3 + c] == f.at(p, 0, c));

  Eigen::VectorXd replaced = Eigen::VectorXd::Constant(15, 0.25);
  f.set_start_slice(replaced);
  for (int p = 0; p < 5; ++p)
    for (int c = 0; c < 3; ++c) CHECK(f.at(p, 0, c) == 0.25);

  testutil::TempDir tmp("flow_rt");
  // f32 storage: quantize first so the round trip is bitwise
  for (Eigen::Index i = 0; i < f.data.size(); ++i) f.data[i] = float(f.data[i]);
  save_flow(f, tmp.file("f.bin"));
  FlowTensor g = load_flow(tmp.file("f.bin"));
  REQUIRE(g.same_shape(f));
  for (Eigen::Index i = 0; i < f.data.size(); ++i) CHECK(g.data[i] == f.data[i]);

  GoalImage img(3, 4);
  for (int i = 0; i < img.pixels.size(); ++i) img.pixels[i] = float(rng.uniform());
  save_gray(img, tmp.file("g.bin"));
  GoalImage img2 = load_gray(tmp.file("g.bin"));
  REQUIRE(img2.height == 3);
  REQUIRE(img2.width == 4);
  for (int i = 0; i < img.pixels.size(); ++i) CHECK(img2.pixels[i] == img.pixels[i]);
}

TEST_CASE("flow io rejects corrupt headers") {
  testutil::TempDir tmp("flow_bad");
  Rng rng(1);
  FlowTensor f = random_flow(3, 3, rng);
  save_flow(f, tmp.file("f.bin"));
  // truncate the payload
  std::string bytes = testutil::slurp(tmp.file("f.bin"));
  std::ofstream out(tmp.file("short.bin"), std::ios::binary);
  out.write(bytes.data(), bytes.size() / 2);
  out.close();
  try {
    load_flow(tmp.file("short.bin"));
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK((e.code() == ErrorCode::kFormatError || e.code() == ErrorCode::kIoError));
  }
  try {
    load_flow(tmp.file("missing.bin"));
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIoError);
  }
}
