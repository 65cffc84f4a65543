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

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "doctest.h"

#include "ecflow/camera.hpp"
#include "ecflow/errors.hpp"
#include "ecflow/kinematics.hpp"
#include "ecflow/oracle.hpp"
#include "ecflow/solver.hpp"
#include "ecflow/urdf_model.hpp"

#include "test_util.hpp"

namespace {

using namespace ecflow;
using testutil::fixture_camera;
using testutil::fixture_chain;

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIoError;  // sentinel for "did not throw"
}

struct SceneFixture {
  SyntheticScene scene;
  FlowRender fr;
  std::vector<DepthMap> depths;

  explicit SceneFixture(std::uint64_t seed, int n_points = 250) {
    scene = make_scene(fixture_chain(), fixture_camera(), 0, seed);
    fr = render_flow(scene, n_points, seed ^ 0xBEEF);
    for (int t = 0; t < fr.flow.horizon; ++t) {
      depths.push_back(point_consistent_depth(scene, t, fr));
    }
  }
};

double deg(double rad) { return rad * 180.0 / M_PI; }

}  // namespace

TEST_CASE("point filter applies each rule exactly") {
  const int W = 128, H = 128;
  DepthMap depth;
  depth.width = W;
  depth.height = H;
  depth.data.assign(static_cast<std::size_t>(W) * H, 2.0f);

  FlowTensor flow(6, 3);
  auto put = [&](int p, int t, double u_px, double v_px, double vis) {
    flow.at(p, t, 0) = u_px / W;
    flow.at(p, t, 1) = v_px / H;
    flow.at(p, t, 2) = vis;
  };
  // moves 5 px, visible, valid depth: survives
  put(0, 1, 40, 40, 1.0);
  put(0, 2, 45, 40, 1.0);
  // not visible at t
  put(1, 1, 40, 50, 0.3);
  put(1, 2, 45, 50, 1.0);
  // not visible at t+1
  put(2, 1, 40, 60, 1.0);
  put(2, 2, 45, 60, 0.2);
  // displacement below the threshold
  put(3, 1, 40, 70, 1.0);
  put(3, 2, 40.2, 70, 1.0);
  // invalid depth under the time-t pixel
  put(4, 1, 40, 80, 1.0);
  put(4, 2, 45, 80, 1.0);
  depth.at(40, 80) = -1.0f;
  // displacement exactly at the threshold counts (0.5 px is a power of two,
  // so the normalized round trip is exact)
  put(5, 1, 32, 90, 1.0);
  put(5, 2, 32.5, 90, 1.0);

  SolverConfig cfg;
  std::vector<int> got = filter_points(flow, 1, depth, cfg);
  CHECK(got == std::vector<int>{0, 5});

  CHECK(code_of([&] { filter_points(flow, -1, depth, cfg); }) == ErrorCode::kBadFrameIndex);
  CHECK(code_of([&] { filter_points(flow, 2, depth, cfg); }) == ErrorCode::kBadFrameIndex);
}

TEST_CASE("raising the motion threshold only removes survivors") {
  SceneFixture fx(301);
  SolverConfig cfg;
  for (int t = 0; t + 1 < fx.fr.flow.horizon; ++t) {
    std::vector<int> prev;
    for (double thr : {0.0, 0.5, 1.0, 2.0, 4.0}) {
      cfg.motion_threshold = thr;
      std::vector<int> cur = filter_points(fx.fr.flow, t, fx.depths[t], cfg);
      if (thr > 0.0) {
        CHECK(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
      }
      prev = cur;
    }
  }
}

TEST_CASE("masked depth cells knock out exactly the points above them") {
  SceneFixture fx(302);
  const int t = 1;
  SolverConfig cfg;
  std::vector<int> before = filter_points(fx.fr.flow, t, fx.depths[t], cfg);

  DepthMap masked = fx.depths[t];
  std::vector<int> holes = inject_invalid_depth(masked, 0.2, 9);
  std::set<int> hole_set(holes.begin(), holes.end());

  std::vector<int> expect;
  for (int p : before) {
    double u = fx.fr.flow.at(p, t, 0) * masked.width;
    double v = fx.fr.flow.at(p, t, 1) * masked.height;
    if (masked.sample_nearest(u, v) > 0.0f) expect.push_back(p);
  }
  std::vector<int> after = filter_points(fx.fr.flow, t, masked, cfg);
  CHECK(after == expect);
  CHECK(after.size() < before.size());
}

TEST_CASE("points are assigned only when exactly one box claims them") {
  CameraModel cam = fixture_camera();
  FlowTensor flow(4, 2);
  auto put = [&](int p, double u_px, double v_px) {
    flow.at(p, 0, 0) = u_px / cam.width;
    flow.at(p, 0, 1) = v_px / cam.height;
    flow.at(p, 0, 2) = 1.0;
    flow.at(p, 1, 0) = (u_px + 3) / cam.width;
    flow.at(p, 1, 1) = v_px / cam.height;
    flow.at(p, 1, 2) = 1.0;
  };
  put(0, 20, 20);  // inside A only
  put(1, 28, 20);  // inside A and B
  put(2, 70, 70);  // inside C only
  put(3, 5, 5);    // inside nothing

  BBox a, b, c;
  a.expand(10, 10);
  a.expand(30, 30);
  b.expand(25, 10);
  b.expand(45, 30);
  c.expand(60, 60);
  c.expand(80, 80);

  JointPointSet set = assign_points_to_joints(flow, 0, {0, 1, 2, 3}, {a, b, c}, cam);
  REQUIRE(set.per_joint.size() == 3);
  REQUIRE(set.per_joint[0].size() == 1);
  CHECK(set.per_joint[0][0].point_index == 0);
  CHECK(set.per_joint[0][0].pixel_t.u == 20.0);
  CHECK(set.per_joint[0][0].target_t1.u == 23.0);
  CHECK(set.per_joint[1].empty());
  REQUIRE(set.per_joint[2].size() == 1);
  CHECK(set.per_joint[2][0].point_index == 2);
  CHECK(set.total() == 2);
}

TEST_CASE("assignment on rendered scenes is structurally unique and mostly true to group") {
  int assigned_total = 0, label_matches = 0;
  for (std::uint64_t seed : {310ull, 311ull, 312ull}) {
    SceneFixture fx(seed);
    SolverConfig cfg;
    for (int t = 0; t + 1 < fx.fr.flow.horizon; ++t) {
      std::vector<int> surviving = filter_points(fx.fr.flow, t, fx.depths[t], cfg);
      std::vector<BBox> bboxes =
          project_joint_bboxes(fx.scene.chain, fx.scene.trajectory[t], fx.scene.camera);
      JointPointSet set =
          assign_points_to_joints(fx.fr.flow, t, surviving, bboxes, fx.scene.camera);
      REQUIRE(set.per_joint.size() == bboxes.size());

      std::set<int> seen;
      for (std::size_t j = 0; j < set.per_joint.size(); ++j) {
        for (const JointPointEntry& entry : set.per_joint[j]) {
          CHECK(seen.count(entry.point_index) == 0);
          seen.insert(entry.point_index);
          // membership recheck: the owning box contains it, no other does
          int inside = 0;
          for (const BBox& box : bboxes) {
            if (box.contains(entry.pixel_t.u, entry.pixel_t.v)) ++inside;
          }
          CHECK(inside == 1);
          CHECK(bboxes[j].contains(entry.pixel_t.u, entry.pixel_t.v));
          ++assigned_total;
          if (fx.fr.group_labels[entry.point_index] == static_cast<int>(j) + 1) {
            ++label_matches;
          }
        }
      }
    }
  }
  REQUIRE(assigned_total > 300);
  double frac = static_cast<double>(label_matches) / assigned_total;
  CAPTURE(frac);
  CHECK(frac >= 0.95);
}

TEST_CASE("lifting goes through the stored depth cell") {
  SceneFixture fx(315);
  const int t = 0;
  SolverConfig cfg;
  std::vector<int> surviving = filter_points(fx.fr.flow, t, fx.depths[t], cfg);
  std::vector<BBox> bboxes =
      project_joint_bboxes(fx.scene.chain, fx.scene.trajectory[t], fx.scene.camera);
  JointPointSet set =
      assign_points_to_joints(fx.fr.flow, t, surviving, bboxes, fx.scene.camera);
  REQUIRE(set.total() > 0);
  lift_points(set, fx.depths[t], fx.scene.camera);
  for (const auto& joint : set.per_joint) {
    for (const JointPointEntry& entry : joint) {
      float z = fx.depths[t].sample_nearest(entry.pixel_t.u, entry.pixel_t.v);
      Eigen::Vector3d want = lift(fx.scene.camera, entry.pixel_t, z);
      CHECK((entry.world_t - want).norm() == 0.0);
    }
  }

  // an invalidated cell under an assigned point is an error, not a guess
  DepthMap broken = fx.depths[t];
  const JointPointEntry* first = nullptr;
  for (const auto& joint : set.per_joint) {
    if (!joint.empty()) {
      first = &joint[0];
      break;
    }
  }
  REQUIRE(first != nullptr);
  // cells own [i, i+1), so the floor of the pixel coordinate addresses them
  int cu = std::clamp(static_cast<int>(std::floor(first->pixel_t.u)), 0, broken.width - 1);
  int cv = std::clamp(static_cast<int>(std::floor(first->pixel_t.v)), 0, broken.height - 1);
  broken.at(cu, cv) = -1.0f;
  JointPointSet set2 =
      assign_points_to_joints(fx.fr.flow, t, surviving, bboxes, fx.scene.camera);
  CHECK(code_of([&] { lift_points(set2, broken, fx.scene.camera); }) ==
        ErrorCode::kInvalidDepth);
}

namespace {

// Point set with float64-exact geometry: pixels and world points recomputed
// from the renderer's attachment bookkeeping, no float32 depth round trip.
JointPointSet exact_point_set(const SceneFixture& fx, int t, int max_points = 100) {
  const KinematicChain& chain = fx.scene.chain;
  const CameraModel& cam = fx.scene.camera;
  std::vector<Pose> fk_t = forward_kinematics(chain, fx.scene.trajectory[t]);
  std::vector<Pose> fk_t1 = forward_kinematics(chain, fx.scene.trajectory[t + 1]);

  JointPointSet set;
  set.per_joint.resize(chain.dof);
  int used = 0;
  for (int p = 0; p < fx.fr.flow.n_points && used < max_points; ++p) {
    int g = fx.fr.group_labels[p];
    if (g < 1) continue;
    if (fx.fr.flow.at(p, t, 2) != 1.0 || fx.fr.flow.at(p, t + 1, 2) != 1.0) continue;
    Eigen::Vector3d world_t = fk_t[fx.fr.link_indices[p]] * fx.fr.local_points[p];
    Eigen::Vector3d world_t1 = fk_t1[fx.fr.link_indices[p]] * fx.fr.local_points[p];
    JointPointEntry entry;
    entry.point_index = p;
    entry.pixel_t = project(cam, world_t);
    entry.target_t1 = project(cam, world_t1);
    entry.world_t = world_t;
    set.per_joint[g - 1].push_back(entry);
    ++used;
  }
  return set;
}

}  // namespace

TEST_CASE("reprojection error vanishes at the true pose for exact points") {
  SceneFixture fx(320);
  const KinematicChain& chain = fx.scene.chain;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(chain.dof);
  for (int t = 0; t + 1 < static_cast<int>(fx.scene.trajectory.size()); ++t) {
    JointPointSet set = exact_point_set(fx, t);
    REQUIRE(set.total() > 30);
    Pose truth = tip_pose(chain, fx.scene.trajectory[t + 1]);
    double err = reprojection_error(truth, set, chain, fx.scene.trajectory[t],
                                    fx.scene.camera, w);
    CAPTURE(t);
    CAPTURE(err);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("reprojection error is affine in the weights") {
  SceneFixture fx(321);
  const KinematicChain& chain = fx.scene.chain;
  const int t = 2;
  JointPointSet set = exact_point_set(fx, t);
  Pose candidate = tip_pose(chain, fx.scene.trajectory[t + 1]);
  // an off-truth candidate too, so the per-joint terms are not near zero
  Pose off = candidate;
  off.translation += Eigen::Vector3d(0.004, -0.002, 0.003);

  Eigen::VectorXd w = Eigen::VectorXd::Ones(chain.dof);
  for (int j = 0; j < chain.dof; ++j) w[j] = 0.25 * (j + 1);

  for (const Pose& pose : {candidate, off}) {
    double base = reprojection_error(pose, set, chain, fx.scene.trajectory[t],
                                     fx.scene.camera, w);
    double doubled = reprojection_error(pose, set, chain, fx.scene.trajectory[t],
                                        fx.scene.camera, Eigen::VectorXd(2.0 * w));
    // doubling every weight doubles every product exactly
    CHECK(doubled == 2.0 * base);

    // zeroing one joint removes exactly its contribution
    Eigen::VectorXd w0 = w;
    w0[3] = 0.0;
    Eigen::VectorXd only3 = Eigen::VectorXd::Zero(chain.dof);
    only3[3] = w[3];
    double without = reprojection_error(pose, set, chain, fx.scene.trajectory[t],
                                        fx.scene.camera, w0);
    double alone = reprojection_error(pose, set, chain, fx.scene.trajectory[t],
                                      fx.scene.camera, only3);
    CHECK(base == doctest::Approx(without + alone).epsilon(1e-14));
  }

  CHECK(code_of([&] {
          reprojection_error(candidate, set, chain, fx.scene.trajectory[t], fx.scene.camera,
                             Eigen::VectorXd::Ones(3));
        }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("unreachable candidates earn the flat ik penalty") {
  SceneFixture fx(322);
  const int t = 1;
  JointPointSet set = exact_point_set(fx, t);
  Pose nowhere;
  nowhere.translation = Eigen::Vector3d(40.0, 0.0, 0.0);  // far outside the workspace
  Eigen::VectorXd w = Eigen::VectorXd::Ones(fx.scene.chain.dof);
  double err = reprojection_error(nowhere, set, fx.scene.chain, fx.scene.trajectory[t],
                                  fx.scene.camera, w);
  CHECK(err == 1e6);
}

TEST_CASE("the error is invariant under a rigid remap of the world frame") {
  SceneFixture fx(323);
  const int t = 1;
  JointPointSet set = exact_point_set(fx, t);
  KinematicChain chain = fx.scene.chain;
  CameraModel cam = fx.scene.camera;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(chain.dof);

  Pose g;
  g.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, -1).normalized()));
  g.translation = Eigen::Vector3d(0.4, -1.1, 0.6);

  KinematicChain moved = chain;
  moved.base_pose = g * chain.base_pose;
  CameraModel moved_cam = cam;
  moved_cam.world_to_camera = cam.world_to_camera * g.inverse();
  JointPointSet moved_set = set;
  for (auto& joint : moved_set.per_joint) {
    for (JointPointEntry& entry : joint) entry.world_t = g * entry.world_t;
  }

  for (const Eigen::Vector3d& nudge :
       {Eigen::Vector3d::Zero().eval(), Eigen::Vector3d(0.003, -0.001, 0.002).eval()}) {
    Pose candidate = tip_pose(chain, fx.scene.trajectory[t + 1]);
    candidate.translation += nudge;
    Pose moved_candidate = g * candidate;
    double a = reprojection_error(candidate, set, chain, fx.scene.trajectory[t], cam, w);
    double b = reprojection_error(moved_candidate, moved_set, moved, fx.scene.trajectory[t],
                                  moved_cam, w);
    CAPTURE(a);
    CAPTURE(b);
    CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, a));
  }
}

TEST_CASE("noiseless steps recover the ground-truth poses") {
  SceneFixture fx(330, 300);
  const KinematicChain& chain = fx.scene.chain;
  SolverConfig cfg;
  JointConfig config = fx.scene.trajectory[0];
  Pose prev = tip_pose(chain, config);
  for (int t = 0; t + 1 < fx.fr.flow.horizon; ++t) {
    StepResult step =
        solve_step(fx.fr.flow, t, config, fx.depths[t], fx.scene.camera, chain, cfg, prev);
    Pose truth = tip_pose(chain, fx.scene.trajectory[t + 1]);
    double terr = translation_distance(step.pose, truth);
    double rerr = deg(rotation_distance(step.pose, truth));
    CAPTURE(t);
    CAPTURE(terr);
    CAPTURE(rerr);
    CHECK(terr <= 1e-3);
    CHECK(rerr <= 0.1);
    CHECK(step.converged);
    CHECK(step.residual >= 0.0);
    prev = step.pose;
    config = step.config_next;
  }
}

TEST_CASE("steps without usable points are reported as degenerate") {
  SceneFixture fx(331);
  SolverConfig cfg;
  FlowTensor dead = fx.fr.flow;
  for (int p = 0; p < dead.n_points; ++p) dead.at(p, 1, 2) = 0.0;
  CHECK(code_of([&] {
          solve_step(dead, 0, fx.scene.trajectory[0], fx.depths[0], fx.scene.camera,
                     fx.scene.chain, cfg, tip_pose(fx.scene.chain, fx.scene.trajectory[0]));
        }) == ErrorCode::kDegenerateStep);

  // an all-zero weight vector cannot select any points and is rejected up front
  SolverConfig zero = cfg;
  zero.joint_weights = Eigen::VectorXd::Zero(fx.scene.chain.dof);
  CHECK(code_of([&] {
          solve_step(fx.fr.flow, 0, fx.scene.trajectory[0], fx.depths[0], fx.scene.camera,
                     fx.scene.chain, zero, tip_pose(fx.scene.chain, fx.scene.trajectory[0]));
        }) == ErrorCode::kDimensionMismatch);
}

TEST_CASE("full trajectory solve tracks the oracle") {
  SceneFixture fx(332, 300);
  const KinematicChain& chain = fx.scene.chain;
  SolverConfig cfg;
  PoseTrajectory traj = solve_trajectory(fx.fr.flow, fx.depths, fx.scene.camera, chain,
                                         fx.scene.trajectory[0], cfg);
  REQUIRE(traj.size() == fx.fr.flow.horizon);
  Pose start = tip_pose(chain, fx.scene.trajectory[0]);
  CHECK(translation_distance(traj.poses[0], start) == 0.0);
  CHECK(traj.residuals[0] == 0.0);
  for (int t = 0; t < traj.size(); ++t) {
    CHECK(!traj.degenerate[t]);
    CHECK(traj.converged[t]);
    Pose truth = tip_pose(chain, fx.scene.trajectory[t]);
    CAPTURE(t);
    CHECK(translation_distance(traj.poses[t], truth) <= 1e-3);
    CHECK(deg(rotation_distance(traj.poses[t], truth)) <= 0.1);
  }

  // feeding the oracle configurations instead of chaining stays on track
  SolverConfig provided = cfg;
  provided.config_source = ConfigSource::kProvided;
  provided.provided_configs = fx.scene.trajectory;
  PoseTrajectory traj2 = solve_trajectory(fx.fr.flow, fx.depths, fx.scene.camera, chain,
                                          fx.scene.trajectory[0], provided);
  for (int t = 0; t < traj2.size(); ++t) {
    Pose truth = tip_pose(chain, fx.scene.trajectory[t]);
    CHECK(translation_distance(traj2.poses[t], truth) <= 1e-3);
  }
}

TEST_CASE("trajectory solve validates its inputs") {
  SceneFixture fx(333);
  SolverConfig cfg;
  FlowTensor one(10, 1);
  CHECK(code_of([&] {
          solve_trajectory(one, {fx.depths[0]}, fx.scene.camera, fx.scene.chain,
                           fx.scene.trajectory[0], cfg);
        }) == ErrorCode::kBadHorizon);
  std::vector<DepthMap> short_depths(fx.depths.begin(), fx.depths.end() - 1);
  CHECK(code_of([&] {
          solve_trajectory(fx.fr.flow, short_depths, fx.scene.camera, fx.scene.chain,
                           fx.scene.trajectory[0], cfg);
        }) == ErrorCode::kShapeMismatch);
  SolverConfig provided = cfg;
  provided.config_source = ConfigSource::kProvided;
  provided.provided_configs = {fx.scene.trajectory[0]};
  CHECK(code_of([&] {
          solve_trajectory(fx.fr.flow, fx.depths, fx.scene.camera, fx.scene.chain,
                           fx.scene.trajectory[0], provided);
        }) == ErrorCode::kShapeMismatch);
}

TEST_CASE("degenerate steps can be skipped by carrying the previous pose") {
  SceneFixture fx(334);
  const int dead_frame = 3;
  FlowTensor flow = fx.fr.flow;
  for (int p = 0; p < flow.n_points; ++p) flow.at(p, dead_frame, 2) = 0.0;

  SolverConfig strict;
  CHECK(code_of([&] {
          solve_trajectory(flow, fx.depths, fx.scene.camera, fx.scene.chain,
                           fx.scene.trajectory[0], strict);
        }) == ErrorCode::kDegenerateStep);

  SolverConfig lax;
  lax.skip_degenerate = true;
  // provide oracle configs so steps after the gap restart from a sane state
  lax.config_source = ConfigSource::kProvided;
  lax.provided_configs = fx.scene.trajectory;
  PoseTrajectory traj = solve_trajectory(flow, fx.depths, fx.scene.camera, fx.scene.chain,
                                         fx.scene.trajectory[0], lax);
  REQUIRE(traj.size() == flow.horizon);
  // the dead frame breaks the step into it and the step out of it
  CHECK(traj.degenerate[dead_frame]);
  CHECK(traj.degenerate[dead_frame + 1]);
  CHECK(translation_distance(traj.poses[dead_frame], traj.poses[dead_frame - 1]) == 0.0);
  for (int t : {1, 2, flow.horizon - 1}) {
    CHECK(!traj.degenerate[t]);
    Pose truth = tip_pose(fx.scene.chain, fx.scene.trajectory[t]);
    CHECK(translation_distance(traj.poses[t], truth) <= 1e-3);
  }
}

TEST_CASE("hidden-tool scenes favor spreading weight over all joints") {
  KinematicChain chain = fixture_chain();
  CameraModel cam = fixture_camera();
  SyntheticScene occ = make_occluded_scene(chain, cam, 0, 700);
  FlowRender fr = render_flow(occ, 300, 41);
  std::vector<DepthMap> depths;
  for (int t = 0; t < fr.flow.horizon; ++t) depths.push_back(point_consistent_depth(occ, t, fr));

  SolverConfig full;
  full.skip_degenerate = true;
  SolverConfig eef_only = full;
  eef_only.joint_weights = Eigen::VectorXd::Zero(chain.dof);
  eef_only.joint_weights[chain.dof - 1] = 1.0;

  PoseTrajectory full_traj =
      solve_trajectory(fr.flow, depths, cam, chain, occ.trajectory[0], full);
  PoseTrajectory eef_traj =
      solve_trajectory(fr.flow, depths, cam, chain, occ.trajectory[0], eef_only);

  double full_err = 0.0, eef_err = 0.0;
  for (int t = 0; t < full_traj.size(); ++t) {
    Pose truth = tip_pose(chain, occ.trajectory[t]);
    full_err += translation_distance(full_traj.poses[t], truth);
    eef_err += translation_distance(eef_traj.poses[t], truth);
  }
  full_err /= full_traj.size();
  eef_err /= eef_traj.size();
  CAPTURE(full_err);
  CAPTURE(eef_err);
  CHECK(full_err <= eef_err);
  CHECK(full_err <= 5e-3);
}
