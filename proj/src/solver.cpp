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

#include "ecflow/solver.hpp"

#include <cmath>
#include <string>

#include "ecflow/errors.hpp"

namespace ecflow {

namespace {

constexpr double kPenaltyPx = 1e6;

Eigen::VectorXd resolved_weights(const SolverConfig& cfg, int dof) {
  Eigen::VectorXd w = cfg.joint_weights;
  if (w.size() == 0) w = Eigen::VectorXd::Ones(dof);
  if (w.size() != dof) {
    throw Error(ErrorCode::kDimensionMismatch,
                "joint_weights length " + std::to_string(w.size()) + " for dof " +
                    std::to_string(dof));
  }
  if (w.minCoeff() < 0.0) {
    throw Error(ErrorCode::kDimensionMismatch, "joint_weights must be non-negative");
  }
  if (w.maxCoeff() <= 0.0) {
    throw Error(ErrorCode::kDimensionMismatch, "joint_weights need a positive entry");
  }
  return w;
}

// representative link per moving group; fixed attachments share their parent's
// rigid motion, so any one link stands in for the whole group
std::vector<int> group_links(const KinematicChain& chain) {
  std::vector<int> groups = chain.rigid_groups();
  std::vector<int> rep(static_cast<std::size_t>(chain.dof), -1);
  for (std::size_t li = 0; li < groups.size(); ++li) {
    int g = groups[li];
    if (g > 0 && rep[g - 1] < 0) rep[g - 1] = static_cast<int>(li);
  }
  return rep;
}

Pose chart_pose(const Pose& anchor, const Eigen::Matrix<double, 6, 1>& x) {
  Pose out;
  out.translation = anchor.translation + x.head<3>();
  Eigen::Vector3d omega = x.tail<3>();
  double angle = omega.norm();
  Eigen::Quaterniond rot = Eigen::Quaterniond::Identity();
  if (angle > 1e-16) {
    rot = Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
  }
  out.rotation = (rot * anchor.rotation).normalized();
  return out;
}

}  // namespace

std::vector<int> filter_points(const FlowTensor& flow, int t, const DepthMap& depth,
                               const SolverConfig& cfg) {
  if (t < 0 || t + 1 >= flow.horizon) {
    throw Error(ErrorCode::kBadFrameIndex,
                "filter_points: step " + std::to_string(t) + " of horizon " +
                    std::to_string(flow.horizon));
  }
  std::vector<int> out;
  for (int p = 0; p < flow.n_points; ++p) {
    if (flow.at(p, t, 2) < cfg.visibility_threshold) continue;
    if (flow.at(p, t + 1, 2) < cfg.visibility_threshold) continue;
    double du = (flow.at(p, t + 1, 0) - flow.at(p, t, 0)) * depth.width;
    double dv = (flow.at(p, t + 1, 1) - flow.at(p, t, 1)) * depth.height;
    if (std::hypot(du, dv) < cfg.motion_threshold) continue;
    double u = flow.at(p, t, 0) * depth.width;
    double v = flow.at(p, t, 1) * depth.height;
    if (depth.sample_nearest(u, v) <= 0.0f) continue;
    out.push_back(p);
  }
  return out;
}

JointPointSet assign_points_to_joints(const FlowTensor& flow, int t,
                                      const std::vector<int>& surviving,
                                      const std::vector<BBox>& bboxes,
                                      const CameraModel& camera) {
  JointPointSet set;
  set.per_joint.resize(bboxes.size());
  for (int p : surviving) {
    double u = flow.at(p, t, 0) * camera.width;
    double v = flow.at(p, t, 1) * camera.height;
    int owner = -1;
    int inside = 0;
    for (std::size_t j = 0; j < bboxes.size(); ++j) {
      if (bboxes[j].contains(u, v)) {
        ++inside;
        owner = static_cast<int>(j);
      }
    }
    if (inside != 1) continue;
    JointPointEntry entry;
    entry.point_index = p;
    entry.pixel_t = {u, v};
    entry.target_t1 = {flow.at(p, t + 1, 0) * camera.width, flow.at(p, t + 1, 1) * camera.height};
    set.per_joint[owner].push_back(entry);
  }
  return set;
}

void lift_points(JointPointSet& set, const DepthMap& depth, const CameraModel& camera) {
  for (auto& joint : set.per_joint) {
    for (JointPointEntry& entry : joint) {
      float z = depth.sample_nearest(entry.pixel_t.u, entry.pixel_t.v);
      if (z <= 0.0f) {
        throw Error(ErrorCode::kInvalidDepth,
                    "lift_points: invalid depth under point " +
                        std::to_string(entry.point_index));
      }
      entry.world_t = lift(camera, entry.pixel_t, z);
    }
  }
}

namespace {

// weighted sum over joints of per-point pixel distances for one link motion
double weighted_pixel_error(const JointPointSet& set, const KinematicChain& chain,
                            const std::vector<Pose>& deltas, const CameraModel& camera,
                            const Eigen::VectorXd& weights) {
  std::vector<int> reps = group_links(chain);
  double err = 0.0;
  for (std::size_t j = 0; j < set.per_joint.size(); ++j) {
    if (set.per_joint[j].empty() || weights[static_cast<Eigen::Index>(j)] == 0.0) continue;
    const Pose& delta = deltas[reps[j]];
    double joint_err = 0.0;
    for (const JointPointEntry& entry : set.per_joint[j]) {
      Eigen::Vector3d moved = delta * entry.world_t;
      try {
        Pixel px = project(camera, moved);
        joint_err += std::hypot(px.u - entry.target_t1.u, px.v - entry.target_t1.v);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kBehindCamera) throw;
        joint_err += kPenaltyPx;
      }
    }
    err += weights[static_cast<Eigen::Index>(j)] * joint_err;
  }
  return err;
}

}  // namespace

double reprojection_error(const Pose& candidate, const JointPointSet& set,
                          const KinematicChain& chain, const JointConfig& config_t,
                          const CameraModel& camera, const Eigen::VectorXd& weights,
                          const IkOptions& inner_ik) {
  if (weights.size() != static_cast<Eigen::Index>(set.per_joint.size())) {
    throw Error(ErrorCode::kDimensionMismatch,
                "reprojection_error: " + std::to_string(weights.size()) + " weights for " +
                    std::to_string(set.per_joint.size()) + " joints");
  }
  IkResult ik = inverse_kinematics(chain, candidate, config_t, inner_ik);
  if (!ik.converged) return kPenaltyPx;
  std::vector<Pose> deltas = link_motion_between(chain, config_t, ik.config);
  return weighted_pixel_error(set, chain, deltas, camera, weights);
}

namespace {

// stacked per-point residuals, sqrt-weighted so the squared norm is the
// weighted sum of squared pixel errors the inner optimizer descends
struct ResidualEval {
  const JointPointSet& set;
  const KinematicChain& chain;
  const JointConfig& config_t;
  const CameraModel& camera;
  const Eigen::VectorXd& weights;
  const IkOptions& inner_ik;
  const Pose& anchor;
  std::vector<int> reps;
  int rows;

  ResidualEval(const JointPointSet& s, const KinematicChain& ch, const JointConfig& cfg_t,
               const CameraModel& cam, const Eigen::VectorXd& w, const IkOptions& ik,
               const Pose& anch)
      : set(s), chain(ch), config_t(cfg_t), camera(cam), weights(w), inner_ik(ik), anchor(anch) {
    reps = group_links(chain);
    rows = 2 * set.total();
  }

  // A config further than this from config_t (any joint) cannot belong to the
  // one-frame motion being solved; the IK hopped to another self-motion branch
  // of the redundant chain.
  static constexpr double kBranchBound = 1.1;

  Eigen::VectorXd operator()(const Eigen::Matrix<double, 6, 1>& x) const {
    Eigen::VectorXd r(rows);
    Pose candidate = chart_pose(anchor, x);
    IkResult ik = inverse_kinematics(chain, candidate, config_t, inner_ik);
    if (!ik.converged) {
      // graded penalty: far above any feasible cost, but sloped toward the
      // reachable set so finite differences point back out of the wall
      r.setConstant(1e2 + 1e2 * std::min(ik.pos_residual + ik.rot_residual, 10.0));
      return r;
    }
    double hop = (ik.config - config_t).cwiseAbs().maxCoeff();
    if (hop > kBranchBound) {
      // branch hops puncture the cost surface with discontinuous pockets;
      // treated as walls with a slope back toward the seed branch
      r.setConstant(1e2 + 1e2 * std::min(hop - kBranchBound, 10.0));
      return r;
    }
    std::vector<Pose> deltas = link_motion_between(chain, config_t, ik.config);
    int row = 0;
    for (std::size_t j = 0; j < set.per_joint.size(); ++j) {
      double sw = std::sqrt(weights[static_cast<Eigen::Index>(j)]);
      const Pose& delta = deltas[reps[j]];
      for (const JointPointEntry& entry : set.per_joint[j]) {
        Eigen::Vector3d moved = delta * entry.world_t;
        try {
          Pixel px = project(camera, moved);
          r[row] = sw * (px.u - entry.target_t1.u);
          r[row + 1] = sw * (px.v - entry.target_t1.v);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kBehindCamera) throw;
          r[row] = 1e3;
          r[row + 1] = 1e3;
        }
        row += 2;
      }
    }
    return r;
  }
};

// Rigid fit of the terminal group's own correspondences: lifted points at t
// against target pixels at t+1, no chain involved. Lands a refinement start
// inside the basin of the observed motion instead of hoping the warm start's
// basin reaches it across the whole step.
bool tip_delta_from_points(const std::vector<JointPointEntry>& entries,
                           const CameraModel& camera, Pose* delta) {
  if (entries.size() < 3) return false;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const JointPointEntry& entry : entries) centroid += entry.world_t;
  centroid /= static_cast<double>(entries.size());

  const int rows = 2 * static_cast<int>(entries.size());
  auto eval = [&](const Eigen::Matrix<double, 6, 1>& y) {
    Eigen::VectorXd r(rows);
    Eigen::Vector3d omega = y.tail<3>();
    double angle = omega.norm();
    Eigen::Quaterniond rot = Eigen::Quaterniond::Identity();
    if (angle > 1e-16) rot = Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
    int row = 0;
    for (const JointPointEntry& entry : entries) {
      Eigen::Vector3d moved = rot * (entry.world_t - centroid) + centroid + y.head<3>();
      try {
        Pixel px = project(camera, moved);
        r[row] = px.u - entry.target_t1.u;
        r[row + 1] = px.v - entry.target_t1.v;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kBehindCamera) throw;
        r[row] = 1e3;
        r[row + 1] = 1e3;
      }
      row += 2;
    }
    return r;
  };

  Eigen::Matrix<double, 6, 1> y = Eigen::Matrix<double, 6, 1>::Zero();
  Eigen::VectorXd r = eval(y);
  double cost = r.squaredNorm();
  double mu = 1e-3;
  const double h = 1e-7;
  for (int iter = 0; iter < 40; ++iter) {
    Eigen::Matrix<double, Eigen::Dynamic, 6> jac(rows, 6);
    for (int k = 0; k < 6; ++k) {
      Eigen::Matrix<double, 6, 1> yp = y;
      yp[k] += h;
      jac.col(k) = (eval(yp) - r) / h;
    }
    Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
    Eigen::Matrix<double, 6, 1> jtr = jac.transpose() * r;
    bool accepted = false;
    for (int tries = 0; tries < 8 && !accepted; ++tries) {
      Eigen::Matrix<double, 6, 6> lhs = jtj;
      lhs.diagonal().array() += mu;
      Eigen::Matrix<double, 6, 1> step = lhs.ldlt().solve(-jtr);
      Eigen::VectorXd r_new = eval(y + step);
      double cost_new = r_new.squaredNorm();
      if (cost_new < cost) {
        y += step;
        double drop = cost - cost_new;
        r = std::move(r_new);
        cost = cost_new;
        mu = std::max(mu * 0.1, 1e-10);
        accepted = true;
        if (drop < 1e-16 || step.norm() < 1e-12) iter = 40;
      } else {
        mu *= 10.0;
      }
    }
    if (!accepted) break;
  }
  if (!std::isfinite(cost) || y.head<3>().norm() > 1.0) return false;

  Eigen::Vector3d omega = y.tail<3>();
  double angle = omega.norm();
  delta->rotation = Eigen::Quaterniond::Identity();
  if (angle > 1e-16) {
    delta->rotation = Eigen::Quaterniond(Eigen::AngleAxisd(angle, omega / angle));
  }
  delta->translation = centroid + y.head<3>() - delta->rotation * centroid;
  return true;
}

// inverse of chart_pose: coordinates of a pose in the chart at anchor
Eigen::Matrix<double, 6, 1> chart_coords(const Pose& anchor, const Pose& pose) {
  Eigen::Matrix<double, 6, 1> x;
  x.head<3>() = pose.translation - anchor.translation;
  Eigen::Quaterniond dq = pose.rotation * anchor.rotation.conjugate();
  if (dq.w() < 0) dq.coeffs() *= -1;
  Eigen::AngleAxisd aa(dq);
  x.tail<3>() = aa.axis() * aa.angle();
  return x;
}

}  // namespace

StepResult solve_step(const FlowTensor& flow, int t, const JointConfig& config_t,
                      const DepthMap& depth, const CameraModel& camera,
                      const KinematicChain& chain, const SolverConfig& cfg,
                      const Pose& prev_pose) {
  Eigen::VectorXd weights = resolved_weights(cfg, chain.dof);

  std::vector<int> surviving = filter_points(flow, t, depth, cfg);
  std::vector<BBox> bboxes = project_joint_bboxes(chain, config_t, camera);
  JointPointSet set = assign_points_to_joints(flow, t, surviving, bboxes, camera);

  double weighted_count = 0.0;
  for (std::size_t j = 0; j < set.per_joint.size(); ++j) {
    weighted_count += weights[static_cast<Eigen::Index>(j)] * set.per_joint[j].size();
  }
  if (set.total() == 0 || weighted_count == 0.0) {
    throw Error(ErrorCode::kDegenerateStep,
                "solve_step: no usable points at step " + std::to_string(t));
  }
  lift_points(set, depth, camera);

  Pose anchor = cfg.warm_start ? prev_pose : tip_pose(chain, config_t);
  if (cfg.warm_start && !inverse_kinematics(chain, anchor, config_t, cfg.inner_ik).converged) {
    // a stale warm start outside the reachable set starts the search on the
    // flat penalty where finite differences see no gradient at all
    anchor = tip_pose(chain, config_t);
  }
  ResidualEval eval(set, chain, config_t, camera, weights, cfg.inner_ik, anchor);

  struct LmRun {
    Eigen::Matrix<double, 6, 1> x;
    double cost = 0.0;
    int iters = 0;
    bool converged = false;
  };
  auto run_lm = [&](const Eigen::Matrix<double, 6, 1>& x_start) {
    LmRun run;
    run.x = x_start;
    Eigen::VectorXd r = eval(run.x);
    double cost = r.squaredNorm();
    double mu = 1e-4;
    const double h = 1e-6;

    for (; run.iters < cfg.max_opt_iters; ++run.iters) {
      Eigen::Matrix<double, Eigen::Dynamic, 6> jac(eval.rows, 6);
      for (int k = 0; k < 6; ++k) {
        Eigen::Matrix<double, 6, 1> xp = run.x;
        xp[k] += h;
        jac.col(k) = (eval(xp) - r) / h;
      }
      Eigen::Matrix<double, 6, 6> jtj = jac.transpose() * jac;
      Eigen::Matrix<double, 6, 1> jtr = jac.transpose() * r;

      bool accepted = false;
      for (int tries = 0; tries < 10 && !accepted; ++tries) {
        Eigen::Matrix<double, 6, 6> lhs = jtj;
        lhs.diagonal().array() += mu;
        Eigen::Matrix<double, 6, 1> step = lhs.ldlt().solve(-jtr);
        // a full trial step can land where the inner ik stalls and the penalty
        // flattens the cost; backtracking along the step recovers the usable
        // fraction instead of burning damping escalations on the same plateau
        double frac = 1.0;
        for (int cut = 0; cut < 5; ++cut, frac *= 0.5) {
          Eigen::Matrix<double, 6, 1> trial = frac * step;
          Eigen::VectorXd r_new = eval(run.x + trial);
          double cost_new = r_new.squaredNorm();
          if (cost_new >= cost) continue;
          run.x += trial;
          double drop = cost - cost_new;
          r = std::move(r_new);
          cost = cost_new;
          mu = std::max(mu * 0.1, 1e-12);
          accepted = true;
          if (drop < cfg.opt_tolerance * cfg.opt_tolerance || trial.norm() < 1e-12) {
            run.converged = true;
          }
          break;
        }
        if (!accepted) {
          mu *= 10.0;
          if (mu > 1e12) break;
        }
      }
      if (!accepted || run.converged) {
        run.converged = run.converged || !accepted;  // stalled counts as settled
        break;
      }
    }
    run.cost = cost;
    return run;
  };

  LmRun best = run_lm(Eigen::Matrix<double, 6, 1>::Zero());
  const char* dbg = std::getenv("ECFLOW_SOLVE_DEBUG");
  if (dbg && *dbg) {
    std::fprintf(stderr, "[t=%d] lm0 cost=%.6e rms=%.6f iters=%d conv=%d\n", t, best.cost,
                 std::sqrt(best.cost / eval.rows), best.iters, (int)best.converged);
  }
  // a trapped run leaves real pixel error on the table; retry from the rigid
  // fit of the terminal group before trusting it
  if (std::sqrt(best.cost / eval.rows) > 0.1) {
    Pose tip_delta;
    if (tip_delta_from_points(set.per_joint[static_cast<std::size_t>(chain.dof) - 1], camera,
                              &tip_delta)) {
      Pose candidate = tip_delta * tip_pose(chain, config_t);
      Eigen::Matrix<double, 6, 1> x_pnp = chart_coords(anchor, candidate);
      if (dbg && *dbg) {
        std::fprintf(stderr, "[t=%d] pnp ok |xp|=%.4f eval(xp)=%.6e\n", t, x_pnp.norm(),
                     eval(x_pnp).squaredNorm());
      }
      LmRun alt = run_lm(x_pnp);
      alt.iters += best.iters;
      if (dbg && *dbg) {
        std::fprintf(stderr, "[t=%d] alt cost=%.6e conv=%d -> %s\n", t, alt.cost,
                     (int)alt.converged, alt.cost < best.cost ? "take" : "keep");
      }
      if (alt.cost < best.cost) best = alt;
    } else if (dbg && *dbg) {
      std::fprintf(stderr, "[t=%d] pnp unavailable (eef pts=%zu)\n", t,
                   set.per_joint[static_cast<std::size_t>(chain.dof) - 1].size());
    }
  }
  Eigen::Matrix<double, 6, 1> x = best.x;
  int iters = best.iters;
  bool converged = best.converged;

  StepResult result;
  result.pose = chart_pose(anchor, x);
  IkResult ik = inverse_kinematics(chain, result.pose, config_t, cfg.inner_ik);
  result.config_next = ik.config;
  if (ik.converged) {
    result.residual = weighted_pixel_error(
        set, chain, link_motion_between(chain, config_t, ik.config), camera, weights);
  } else {
    result.residual = kPenaltyPx;
  }
  result.iterations = iters;
  result.converged = converged && ik.converged;
  return result;
}

PoseTrajectory solve_trajectory(const FlowTensor& flow, const std::vector<DepthMap>& depths,
                                const CameraModel& camera, const KinematicChain& chain,
                                const JointConfig& init_config, const SolverConfig& cfg) {
  if (flow.horizon < 2) {
    throw Error(ErrorCode::kBadHorizon, "solve_trajectory: horizon must be >= 2");
  }
  if (static_cast<int>(depths.size()) != flow.horizon) {
    throw Error(ErrorCode::kShapeMismatch,
                "solve_trajectory: " + std::to_string(depths.size()) + " depth maps for horizon " +
                    std::to_string(flow.horizon));
  }
  if (cfg.config_source == ConfigSource::kProvided &&
      static_cast<int>(cfg.provided_configs.size()) != flow.horizon) {
    throw Error(ErrorCode::kShapeMismatch,
                "solve_trajectory: provided_configs length must equal the horizon");
  }

  PoseTrajectory traj;
  JointConfig config = init_config;
  Pose prev_pose = tip_pose(chain, config);
  traj.append(prev_pose, 0.0, 0, true, false);

  for (int t = 0; t + 1 < flow.horizon; ++t) {
    try {
      StepResult step = solve_step(flow, t, config, depths[t], camera, chain, cfg, prev_pose);
      traj.append(step.pose, step.residual, step.iterations, step.converged, false);
      prev_pose = step.pose;
      config = cfg.config_source == ConfigSource::kProvided ? cfg.provided_configs[t + 1]
                                                            : step.config_next;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateStep || !cfg.skip_degenerate) throw;
      traj.append(prev_pose, 0.0, 0, false, true);
      if (cfg.config_source == ConfigSource::kProvided) config = cfg.provided_configs[t + 1];
    }
  }
  return traj;
}

}  // namespace ecflow
