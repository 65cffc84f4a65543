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

#include "ecflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "ecflow/blob_io.hpp"
#include "ecflow/errors.hpp"
#include "ecflow/kinematics.hpp"
#include "ecflow/rng.hpp"

namespace ecflow {

namespace {
constexpr double kOcclusionTol = 1e-6;  // meters along the ray
}

Ray camera_ray(const CameraModel& camera, double u, double v) {
  Pose cam_to_world = camera.world_to_camera.inverse();
  Ray ray;
  ray.origin = cam_to_world.translation;
  Eigen::Vector3d dir_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
  ray.dir = cam_to_world.rotation * dir_cam;  // parameter equals camera z
  return ray;
}

double ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& half,
               double s_min) {
  double t0 = -kRayMiss, t1 = kRayMiss;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (std::abs(o[i]) > half[i]) return kRayMiss;
      continue;
    }
    double ta = (-half[i] - o[i]) / d[i];
    double tb = (half[i] - o[i]) / d[i];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t1 < t0) return kRayMiss;
  if (t0 >= s_min) return t0;
  if (t1 >= s_min) return t1;
  return kRayMiss;
}

double ray_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double radius,
                  double s_min) {
  double a = d.dot(d);
  double b = 2.0 * o.dot(d);
  double c = o.dot(o) - radius * radius;
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return kRayMiss;
  double sq = std::sqrt(disc);
  double r0 = (-b - sq) / (2.0 * a);
  double r1 = (-b + sq) / (2.0 * a);
  if (r0 >= s_min) return r0;
  if (r1 >= s_min) return r1;
  return kRayMiss;
}

double ray_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double radius, double hl,
                    double s_min) {
  double best = kRayMiss;
  double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
    double c = o.x() * o.x() + o.y() * o.y() - radius * radius;
    double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t >= s_min && t < best && std::abs(o.z() + t * d.z()) <= hl) best = t;
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double cap : {-hl, hl}) {
      double t = (cap - o.z()) / d.z();
      if (t >= s_min && t < best) {
        double x = o.x() + t * d.x();
        double y = o.y() + t * d.y();
        if (x * x + y * y <= radius * radius) best = t;
      }
    }
  }
  return best;
}

std::vector<ScenePrimitive> scene_primitives(const SyntheticScene& scene, int frame) {
  std::vector<ScenePrimitive> prims;
  if (!scene.chain.links.empty()) {
    if (frame < 0 || frame >= static_cast<int>(scene.trajectory.size())) {
      throw Error(ErrorCode::kBadFrameIndex, "scene_primitives: frame out of range");
    }
    std::vector<Pose> fk = forward_kinematics(scene.chain, scene.trajectory[frame]);
    std::vector<int> groups = scene.chain.rigid_groups();
    for (std::size_t li = 0; li < scene.chain.links.size(); ++li) {
      auto it = scene.chain.geometries.find(scene.chain.links[li]);
      if (it == scene.chain.geometries.end()) continue;
      ScenePrimitive prim;
      prim.world_pose = fk[li] * it->second.origin;
      prim.kind = it->second.kind;
      prim.dims = it->second.dims;
      prim.group = groups[li];
      prim.link_index = static_cast<int>(li);
      prims.push_back(prim);
    }
  }
  for (const WorldBox& box : scene.occluders) {
    ScenePrimitive prim;
    prim.world_pose = box.pose;
    prim.kind = GeometryKind::kBox;
    prim.dims = 2.0 * box.half;
    prim.group = -1;
    prim.link_index = -1;
    prims.push_back(prim);
  }
  return prims;
}

RayHit cast_ray(const std::vector<ScenePrimitive>& prims, const Ray& ray, double s_min) {
  RayHit hit;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const ScenePrimitive& prim = prims[i];
    Pose inv = prim.world_pose.inverse();
    Eigen::Vector3d o = inv * ray.origin;
    Eigen::Vector3d d = inv.rotation * ray.dir;
    double s = kRayMiss;
    switch (prim.kind) {
      case GeometryKind::kBox:
        s = ray_box(o, d, prim.dims * 0.5, s_min);
        break;
      case GeometryKind::kCylinder:
        s = ray_cylinder(o, d, prim.dims[0], prim.dims[1] * 0.5, s_min);
        break;
      case GeometryKind::kSphere:
        s = ray_sphere(o, d, prim.dims[0], s_min);
        break;
    }
    if (s < hit.s) {
      hit.s = s;
      hit.primitive = static_cast<int>(i);
    }
  }
  if (hit.s >= kRayMiss) hit.primitive = -1;
  return hit;
}

IdDepthBuffer render_id_depth(const SyntheticScene& scene, int frame, int factor,
                              const ExecConfig& exec) {
  std::vector<ScenePrimitive> prims = scene_primitives(scene, frame);
  IdDepthBuffer buf;
  buf.factor = factor;
  buf.depth.width = scene.camera.width * factor;
  buf.depth.height = scene.camera.height * factor;
  buf.depth.data.assign(static_cast<std::size_t>(buf.depth.width) * buf.depth.height, 0.0f);
  buf.ids.assign(buf.depth.data.size(), -1);

  parallel_for(buf.depth.height, exec, [&](int py) {
    for (int px = 0; px < buf.depth.width; ++px) {
      double u = (px + 0.5) / factor;
      double v = (py + 0.5) / factor;
      RayHit hit = cast_ray(prims, camera_ray(scene.camera, u, v));
      if (hit.primitive >= 0) {
        buf.depth.at(px, py) = static_cast<float>(hit.s);
        buf.ids[static_cast<std::size_t>(py) * buf.depth.width + px] = hit.primitive;
      }
    }
  });
  return buf;
}

DepthMap render_depth(const SyntheticScene& scene, int frame, const ExecConfig& exec) {
  return render_id_depth(scene, frame, 1, exec).depth;
}

std::vector<int> inject_invalid_depth(DepthMap& depth, double fraction, std::uint64_t seed) {
  std::vector<int> valid;
  for (std::size_t i = 0; i < depth.data.size(); ++i) {
    if (depth.data[i] > 0.0f) valid.push_back(static_cast<int>(i));
  }
  int k = static_cast<int>(std::llround(fraction * static_cast<double>(valid.size())));
  k = std::clamp(k, 0, static_cast<int>(valid.size()));
  Rng rng(seed);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(rng.uniform_int(0, static_cast<int>(valid.size()) - 1 - i));
    std::swap(valid[i], valid[j]);
  }
  std::vector<int> picked(valid.begin(), valid.begin() + k);
  std::sort(picked.begin(), picked.end());
  for (int idx : picked) depth.data[idx] = -1.0f;
  return picked;
}

GoalImage render_gray(const SyntheticScene& scene, int frame, int height, int width) {
  std::vector<ScenePrimitive> prims = scene_primitives(scene, frame);
  GoalImage img(height, width);
  const double su = static_cast<double>(scene.camera.width) / width;
  const double sv = static_cast<double>(scene.camera.height) / height;
  const double z_near = 0.5, z_far = 5.0;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double acc = 0.0;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          double u = (c + (a + 0.5) / 2.0) * su;
          double v = (r + (b + 0.5) / 2.0) * sv;
          RayHit hit = cast_ray(prims, camera_ray(scene.camera, u, v));
          if (hit.primitive >= 0) {
            acc += std::clamp((z_far - hit.s) / (z_far - z_near), 0.0, 1.0);
          }
        }
      }
      img.at(r, c) = acc / 4.0;
    }
  }
  return img;
}

GoalImage render_initial(const SyntheticScene& scene) { return render_gray(scene, 0, 16, 16); }

GoalImage render_goal_image(const SyntheticScene& scene) {
  return render_gray(scene, static_cast<int>(scene.trajectory.size()) - 1, 16, 16);
}

namespace {

// True when nothing in the scene intersects the camera ray through `world`
// strictly before the point itself.
bool point_unoccluded(const std::vector<ScenePrimitive>& prims, const CameraModel& camera,
                      const Eigen::Vector3d& world, double u, double v, double z) {
  Ray ray = camera_ray(camera, u, v);
  RayHit hit = cast_ray(prims, ray);
  return hit.primitive < 0 || hit.s >= z - kOcclusionTol;
}

}  // namespace

FlowRender render_flow(const SyntheticScene& scene, int n_points, std::uint64_t seed) {
  if (scene.chain.links.empty() || scene.chain.dof < 1) {
    throw Error(ErrorCode::kEmptyChain, "render_flow: scene has no articulated chain");
  }
  if (n_points < 1) {
    throw Error(ErrorCode::kShapeMismatch, "render_flow: n_points must be >= 1");
  }
  const int T = static_cast<int>(scene.trajectory.size());
  const int W = scene.camera.width, H = scene.camera.height;

  // frame-0 footprint: every image cell whose center ray hits the embodiment
  // is an attachment candidate, so sampling is area proportional by counting
  IdDepthBuffer base = render_id_depth(scene, 0, 1);
  std::vector<ScenePrimitive> prims0 = scene_primitives(scene, 0);
  std::vector<Pose> fk0 = forward_kinematics(scene.chain, scene.trajectory[0]);

  struct Candidate {
    Eigen::Vector3d local;
    int link = 0;
    int group = 0;
  };
  std::vector<Candidate> candidates;
  for (int py = 0; py < H; ++py) {
    for (int px = 0; px < W; ++px) {
      int id = base.ids[static_cast<std::size_t>(py) * W + px];
      if (id < 0 || prims0[id].link_index < 0) continue;  // background or occluder
      double s = base.depth.at(px, py);
      Ray ray = camera_ray(scene.camera, px + 0.5, py + 0.5);
      Eigen::Vector3d world = ray.origin + s * ray.dir;
      Candidate cand;
      cand.link = prims0[id].link_index;
      cand.group = prims0[id].group;
      cand.local = fk0[cand.link].inverse() * world;
      candidates.push_back(cand);
    }
  }
  Rng rng(derive_seed(seed, 0xCAFE));
  for (int i = static_cast<int>(candidates.size()) - 1; i > 0; --i) {
    int j = static_cast<int>(rng.uniform_int(0, i));
    std::swap(candidates[i], candidates[j]);
  }

  std::vector<std::vector<Pose>> fk(T);
  std::vector<std::vector<ScenePrimitive>> prims(T);
  for (int t = 0; t < T; ++t) {
    fk[t] = forward_kinematics(scene.chain, scene.trajectory[t]);
    prims[t] = scene_primitives(scene, t);
  }

  FlowRender out;
  out.flow = FlowTensor(n_points, T);
  out.point_depth = Eigen::MatrixXd::Constant(n_points, T, -1.0);
  // taken[t] holds cells already claimed by a point visible in frame t;
  // keeping those unique is what makes per-cell depth lookups exact for every
  // tracked point downstream
  std::vector<std::set<long>> taken(T);

  int accepted = 0;
  std::vector<double> us(T), vs(T), zs(T);
  std::vector<int> vis(T);
  for (const Candidate& cand : candidates) {
    if (accepted == n_points) break;
    bool usable = true;
    for (int t = 0; t < T; ++t) {
      Eigen::Vector3d world = fk[t][cand.link] * cand.local;
      Eigen::Vector3d pc = scene.camera.world_to_camera * world;
      if (pc.z() <= 1e-9) {
        vis[t] = 0;
        us[t] = t > 0 ? us[t - 1] : 0.5 * W;
        vs[t] = t > 0 ? vs[t - 1] : 0.5 * H;
        zs[t] = -1.0;
        continue;
      }
      double u = scene.camera.fx * pc.x() / pc.z() + scene.camera.cx;
      double v = scene.camera.fy * pc.y() / pc.z() + scene.camera.cy;
      bool inside = u >= 0.0 && u <= W && v >= 0.0 && v <= H;
      vis[t] = inside && point_unoccluded(prims[t], scene.camera, world, u, v, pc.z()) ? 1 : 0;
      us[t] = u;
      vs[t] = v;
      zs[t] = pc.z();
    }
    for (int t = 0; t < T && usable; ++t) {
      if (!vis[t]) continue;
      long cell = static_cast<long>(std::clamp(static_cast<int>(std::floor(vs[t])), 0, H - 1)) *
                      W +
                  std::clamp(static_cast<int>(std::floor(us[t])), 0, W - 1);
      if (taken[t].count(cell)) usable = false;
    }
    if (!usable) continue;

    for (int t = 0; t < T; ++t) {
      if (vis[t]) {
        long cell =
            static_cast<long>(std::clamp(static_cast<int>(std::floor(vs[t])), 0, H - 1)) * W +
            std::clamp(static_cast<int>(std::floor(us[t])), 0, W - 1);
        taken[t].insert(cell);
        out.point_depth(accepted, t) = zs[t];
      }
      out.flow.at(accepted, t, 0) = std::clamp(us[t] / W, 0.0, 1.0);
      out.flow.at(accepted, t, 1) = std::clamp(vs[t] / H, 0.0, 1.0);
      out.flow.at(accepted, t, 2) = vis[t] ? 1.0 : 0.0;
    }
    out.group_labels.push_back(cand.group);
    out.link_indices.push_back(cand.link);
    out.local_points.push_back(cand.local);
    ++accepted;
  }
  if (accepted < n_points) {
    throw Error(ErrorCode::kShapeMismatch,
                "render_flow: embodiment footprint too small for " + std::to_string(n_points) +
                    " points (got " + std::to_string(accepted) + ")");
  }
  return out;
}

DepthMap point_consistent_depth(const SyntheticScene& scene, int frame, const FlowRender& fr,
                                const ExecConfig& exec) {
  DepthMap depth = render_depth(scene, frame, exec);
  const int W = depth.width, H = depth.height;
  for (int p = 0; p < fr.flow.n_points; ++p) {
    if (fr.flow.at(p, frame, 2) < 0.5) continue;
    double u = fr.flow.at(p, frame, 0) * W;
    double v = fr.flow.at(p, frame, 1) * H;
    int cu = std::clamp(static_cast<int>(std::floor(u)), 0, W - 1);
    int cv = std::clamp(static_cast<int>(std::floor(v)), 0, H - 1);
    depth.at(cu, cv) = static_cast<float>(fr.point_depth(p, frame));
  }
  return depth;
}

void perturb_flow(FlowTensor& flow, double sigma_px, int width, int height, std::uint64_t seed) {
  Rng rng(seed);
  for (int p = 0; p < flow.n_points; ++p) {
    for (int t = 1; t < flow.horizon; ++t) {
      double du = rng.normal() * sigma_px;
      double dv = rng.normal() * sigma_px;
      flow.at(p, t, 0) = std::clamp(flow.at(p, t, 0) + du / width, 0.0, 1.0);
      flow.at(p, t, 1) = std::clamp(flow.at(p, t, 1) + dv / height, 0.0, 1.0);
    }
  }
}

namespace {

// Natural cubic spline on uniform knots, Thomas solve for the second
// derivatives.
std::vector<double> spline_second_derivs(const std::vector<double>& y) {
  const int n = static_cast<int>(y.size());
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  std::vector<double> diag(n - 2, 4.0), rhs(n - 2);
  for (int i = 0; i < n - 2; ++i) rhs[i] = 6.0 * (y[i] - 2.0 * y[i + 1] + y[i + 2]);
  for (int i = 1; i < n - 2; ++i) {
    double w = 1.0 / diag[i - 1];
    diag[i] -= w;
    rhs[i] -= w * rhs[i - 1];
  }
  for (int i = n - 3; i >= 0; --i) {
    double upper = i + 1 < n - 2 ? m[i + 2] : 0.0;
    m[i + 1] = (rhs[i] - upper) / diag[i];
  }
  return m;
}

double spline_eval(const std::vector<double>& y, const std::vector<double>& m, double x) {
  const int n = static_cast<int>(y.size());
  int i = std::clamp(static_cast<int>(std::floor(x)), 0, n - 2);
  double s = x - i;
  return m[i] * (1.0 - s) * (1.0 - s) * (1.0 - s) / 6.0 + m[i + 1] * s * s * s / 6.0 +
         (y[i] - m[i] / 6.0) * (1.0 - s) + (y[i + 1] - m[i + 1] / 6.0) * s;
}

}  // namespace

std::vector<JointConfig> gen_trajectory(const KinematicChain& chain, int horizon,
                                        std::uint64_t seed, double max_step) {
  if (horizon < 2) throw Error(ErrorCode::kBadHorizon, "gen_trajectory: horizon must be >= 2");
  const int knots = 4;
  Rng rng(derive_seed(seed, 0x7A11));

  std::vector<std::vector<double>> knot_vals(chain.dof, std::vector<double>(knots));
  int slot = 0;
  for (const JointSpec& joint : chain.joints) {
    if (!joint.mobile()) continue;
    double lo = joint.limit_lower, hi = joint.limit_upper;
    double margin = 0.08 * (hi - lo);
    for (int k = 0; k < knots; ++k) knot_vals[slot][k] = rng.uniform(lo + margin, hi - margin);
    ++slot;
  }

  std::vector<JointConfig> traj(horizon, JointConfig::Zero(chain.dof));
  for (int j = 0; j < chain.dof; ++j) {
    std::vector<double> m = spline_second_derivs(knot_vals[j]);
    for (int t = 0; t < horizon; ++t) {
      double x = static_cast<double>(t) * (knots - 1) / (horizon - 1);
      traj[t][j] = spline_eval(knot_vals[j], m, x);
    }
  }

  double worst = 0.0;
  for (int t = 0; t + 1 < horizon; ++t) {
    worst = std::max(worst, (traj[t + 1] - traj[t]).cwiseAbs().maxCoeff());
  }
  if (worst > max_step) {
    double scale = max_step / worst;
    for (int t = 1; t < horizon; ++t) traj[t] = traj[0] + scale * (traj[t] - traj[0]);
  }
  for (JointConfig& q : traj) q = clamp_to_limits(chain, q);
  return traj;
}

std::vector<JointConfig> ik_consistent_trajectory(const KinematicChain& chain,
                                                  const std::vector<JointConfig>& trajectory) {
  std::vector<JointConfig> out;
  out.reserve(trajectory.size());
  out.push_back(trajectory.front());
  for (std::size_t t = 1; t < trajectory.size(); ++t) {
    Pose target = tip_pose(chain, trajectory[t]);
    IkResult res = inverse_kinematics(chain, target, out.back());
    out.push_back(res.config);
  }
  return out;
}

namespace {

bool trajectory_in_view(const SyntheticScene& scene, const SceneOptions& opts) {
  const CameraModel& cam = scene.camera;
  std::vector<Pixel> tips;
  for (const JointConfig& q : scene.trajectory) {
    Pose tip = tip_pose(scene.chain, q);
    try {
      Pixel px = project(cam, tip.translation);
      if (px.u < opts.image_margin_px || px.u > cam.width - opts.image_margin_px ||
          px.v < opts.image_margin_px || px.v > cam.height - opts.image_margin_px) {
        return false;
      }
      tips.push_back(px);
    } catch (const Error&) {
      return false;
    }
  }
  for (std::size_t t = 0; t + 1 < tips.size(); ++t) {
    double d = std::hypot(tips[t + 1].u - tips[t].u, tips[t + 1].v - tips[t].v);
    if (d < opts.min_tip_motion_px || d > opts.max_tip_motion_px) return false;
  }
  return true;
}

bool ik_pass_ok(const KinematicChain& chain, const std::vector<JointConfig>& spline,
                const std::vector<JointConfig>& fixed) {
  for (std::size_t t = 0; t < spline.size(); ++t) {
    Pose want = tip_pose(chain, spline[t]);
    Pose got = tip_pose(chain, fixed[t]);
    if (translation_distance(want, got) > 1e-8 || rotation_distance(want, got) > 1e-8) {
      return false;
    }
  }
  return true;
}

// The flow sampler is area proportional, so groups only receive points in
// rough proportion to their footprint; a posture that forecloses the terminal
// group anywhere in the horizon leaves the tip pose unconstrained for the
// solver. Rejected here rather than patched downstream.
bool coverage_ok(const SyntheticScene& scene, const SceneOptions& opts) {
  const int T = static_cast<int>(scene.trajectory.size());
  const int W = scene.camera.width, H = scene.camera.height;
  const int eef_group = scene.chain.dof;

  std::vector<std::vector<ScenePrimitive>> prims(T);
  std::vector<std::vector<Pose>> fk(T);
  for (int t = 0; t < T; ++t) {
    prims[t] = scene_primitives(scene, t);
    fk[t] = forward_kinematics(scene.chain, scene.trajectory[t]);
  }

  struct TrackedCell {
    Eigen::Vector3d local;
    int link = 0;
  };
  std::vector<TrackedCell> eef_cells;

  for (int t = 0; t < T; ++t) {
    IdDepthBuffer buf = render_id_depth(scene, t, 1);
    std::vector<int> cells(static_cast<std::size_t>(eef_group) + 1, 0);
    for (int py = 0; py < H; ++py) {
      for (int px = 0; px < W; ++px) {
        int id = buf.ids[static_cast<std::size_t>(py) * W + px];
        if (id < 0) continue;
        const ScenePrimitive& pr = prims[t][static_cast<std::size_t>(id)];
        if (pr.link_index < 0 || pr.group <= 0) continue;
        ++cells[pr.group];
        if (t == 0 && pr.group == eef_group) {
          double s = buf.depth.at(px, py);
          Ray ray = camera_ray(scene.camera, px + 0.5, py + 0.5);
          Eigen::Vector3d world = ray.origin + s * ray.dir;
          eef_cells.push_back({fk[0][pr.link_index].inverse() * world, pr.link_index});
        }
      }
    }
    if (cells[eef_group] < opts.min_eef_cells) return false;
    for (int g = 1; g < eef_group; ++g) {
      if (cells[g] < opts.min_group_cells) return false;
    }
  }

  for (int t = 1; t < T; ++t) {
    int alive = 0;
    for (const TrackedCell& c : eef_cells) {
      Eigen::Vector3d world = fk[t][c.link] * c.local;
      Eigen::Vector3d pc = scene.camera.world_to_camera * world;
      if (pc.z() <= 1e-9) continue;
      double u = scene.camera.fx * pc.x() / pc.z() + scene.camera.cx;
      double v = scene.camera.fy * pc.y() / pc.z() + scene.camera.cy;
      if (u < 0.0 || u > W || v < 0.0 || v > H) continue;
      if (!point_unoccluded(prims[t], scene.camera, world, u, v, pc.z())) continue;
      ++alive;
    }
    if (alive < opts.min_eef_tracked) return false;
  }
  return true;
}

}  // namespace

SyntheticScene make_scene(const KinematicChain& chain, const CameraModel& camera, int task_id,
                          std::uint64_t seed, const SceneOptions& opts) {
  for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
    std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(attempt), 0x5CE8E);
    SyntheticScene scene;
    scene.chain = chain;
    scene.camera = camera;
    scene.task_id = task_id;
    scene.seed = seed;
    scene.trajectory = gen_trajectory(chain, opts.horizon, s, opts.max_joint_step);
    if (!trajectory_in_view(scene, opts)) continue;
    std::vector<JointConfig> fixed = ik_consistent_trajectory(chain, scene.trajectory);
    if (!ik_pass_ok(chain, scene.trajectory, fixed)) continue;
    scene.trajectory = std::move(fixed);
    if (!trajectory_in_view(scene, opts)) continue;
    if (!coverage_ok(scene, opts)) continue;
    return scene;
  }
  throw Error(ErrorCode::kBadHorizon, "make_scene: no admissible trajectory after " +
                                          std::to_string(opts.max_attempts) + " attempts");
}

namespace {

// group-surface sample points in world coordinates at one frame
std::vector<Eigen::Vector3d> group_surface_world(const SyntheticScene& scene, int frame,
                                                 int group) {
  std::vector<Pose> fk = forward_kinematics(scene.chain, scene.trajectory[frame]);
  std::vector<int> groups = scene.chain.rigid_groups();
  std::vector<Eigen::Vector3d> pts;
  for (std::size_t li = 0; li < scene.chain.links.size(); ++li) {
    if (groups[li] != group) continue;
    auto it = scene.chain.geometries.find(scene.chain.links[li]);
    if (it == scene.chain.geometries.end()) continue;
    for (const Eigen::Vector3d& local : geometry_sample_points(it->second)) {
      pts.push_back(fk[li] * local);
    }
  }
  return pts;
}

// Surface samples on the far side of their own primitive are self-occluded
// even without the staged box, so coverage is judged against the points that
// start out visible, not against the whole sample set.
struct OcclusionCount {
  int visible = 0;  // visible before the box is added
  int hidden = 0;   // of those, blocked once the box is present
};

OcclusionCount count_occluder_hidden(const SyntheticScene& with_box,
                                     const SyntheticScene& without_box, int frame,
                                     const std::vector<Eigen::Vector3d>& world_pts) {
  std::vector<ScenePrimitive> prims_with = scene_primitives(with_box, frame);
  std::vector<ScenePrimitive> prims_without = scene_primitives(without_box, frame);
  OcclusionCount out;
  for (const Eigen::Vector3d& world : world_pts) {
    Eigen::Vector3d pc = with_box.camera.world_to_camera * world;
    if (pc.z() <= 1e-9) continue;
    double u = with_box.camera.fx * pc.x() / pc.z() + with_box.camera.cx;
    double v = with_box.camera.fy * pc.y() / pc.z() + with_box.camera.cy;
    if (!point_unoccluded(prims_without, with_box.camera, world, u, v, pc.z())) continue;
    ++out.visible;
    if (!point_unoccluded(prims_with, with_box.camera, world, u, v, pc.z())) ++out.hidden;
  }
  return out;
}

}  // namespace

SyntheticScene make_occluded_scene(const KinematicChain& chain, const CameraModel& camera,
                                   int task_id, std::uint64_t seed, int min_occluded_frames,
                                   const SceneOptions& opts) {
  const int eef_group = chain.rigid_groups().empty() ? 0 : chain.dof;
  for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
    std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(attempt), 0x0CC1);
    SyntheticScene scene = make_scene(chain, camera, task_id, s, opts);
    const int T = static_cast<int>(scene.trajectory.size());

    // block a middle window of exactly min_occluded_frames frames
    int w0 = std::max(1, T / 4);
    int w1 = std::min(T - 2, w0 + min_occluded_frames - 1);
    if (w1 - w0 + 1 < min_occluded_frames) continue;

    Eigen::Vector3d cam_pos = camera.world_to_camera.inverse().translation;
    std::vector<Eigen::Vector3d> window_pts;
    for (int t = w0; t <= w1; ++t) {
      std::vector<Eigen::Vector3d> pts = group_surface_world(scene, t, eef_group);
      window_pts.insert(window_pts.end(), pts.begin(), pts.end());
    }
    if (window_pts.empty()) continue;

    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const Eigen::Vector3d& p : window_pts) centroid += p;
    centroid /= static_cast<double>(window_pts.size());

    Eigen::Vector3d view = (centroid - cam_pos).normalized();
    Eigen::Vector3d up = std::abs(view.z()) < 0.9 ? Eigen::Vector3d::UnitZ()
                                                  : Eigen::Vector3d::UnitX();
    Eigen::Vector3d ax = view.cross(up).normalized();
    Eigen::Vector3d ay = view.cross(ax).normalized();

    // close to the tool so the screen-space shadow barely exceeds the window
    // footprint and the neighbouring frames stay clear
    const double frac = 0.8;
    Eigen::Vector3d box_center = cam_pos + frac * (centroid - cam_pos);
    // lateral footprint of the window points as seen from the camera, scaled
    // to the occluder's depth
    double ex = 0.0, ey = 0.0;
    for (const Eigen::Vector3d& p : window_pts) {
      Eigen::Vector3d rel = p - cam_pos;
      double depth = rel.dot(view);
      if (depth <= 1e-6) continue;
      double scale = (box_center - cam_pos).dot(view) / depth;
      Eigen::Vector3d at_plane = cam_pos + rel * scale - box_center;
      ex = std::max(ex, std::abs(at_plane.dot(ax)));
      ey = std::max(ey, std::abs(at_plane.dot(ay)));
    }
    WorldBox box;
    Eigen::Matrix3d rot;
    rot.col(0) = ax;
    rot.col(1) = ay;
    rot.col(2) = view;
    box.pose.rotation = Eigen::Quaterniond(rot);
    box.pose.translation = box_center;
    box.half = Eigen::Vector3d(ex + 0.03, ey + 0.03, 0.02);

    SyntheticScene occluded = scene;
    occluded.occluders.push_back(box);

    int fully_hidden_frames = 0;
    bool clean = true;
    for (int t = 0; t < T && clean; ++t) {
      bool in_window = t >= w0 && t <= w1;
      std::vector<Eigen::Vector3d> eef_pts = group_surface_world(scene, t, eef_group);
      OcclusionCount eef = count_occluder_hidden(occluded, scene, t, eef_pts);
      if (in_window) {
        if (eef.visible > 0 && eef.hidden >= static_cast<int>(std::ceil(0.9 * eef.visible))) {
          ++fully_hidden_frames;
        }
      } else if (eef.hidden * 3 > eef.visible) {
        // the box may clip the window edges but must not smear the occlusion
        // across the horizon
        clean = false;
      }
      for (int g = 1; g < chain.dof && clean; ++g) {
        std::vector<Eigen::Vector3d> pts = group_surface_world(scene, t, g);
        OcclusionCount c = count_occluder_hidden(occluded, scene, t, pts);
        if (c.hidden * 2 > c.visible) clean = false;
      }
    }
    if (clean && fully_hidden_frames >= min_occluded_frames) return occluded;
  }
  throw Error(ErrorCode::kBadHorizon,
              "make_occluded_scene: could not stage the occlusion deterministically");
}

SceneSample make_sample(const SyntheticScene& scene, std::uint64_t seed,
                        const SampleOptions& opts) {
  const int T = static_cast<int>(scene.trajectory.size());
  SceneSample sample;
  FlowRender fr = render_flow(scene, opts.n_points, derive_seed(seed, 0xF10));
  for (int t = 0; t < T; ++t) {
    DepthMap depth = point_consistent_depth(scene, t, fr, opts.exec);
    std::vector<int> mask;
    if (opts.invalid_depth_fraction > 0.0) {
      mask = inject_invalid_depth(depth, opts.invalid_depth_fraction,
                                  derive_seed(seed, static_cast<std::uint64_t>(t), 0x1BAD));
    }
    sample.depths.push_back(std::move(depth));
    sample.invalid_masks.push_back(std::move(mask));
  }
  sample.flow = std::move(fr.flow);
  sample.group_labels = std::move(fr.group_labels);

  sample.initial_image = render_gray(scene, 0, opts.goal_h, opts.goal_w);
  sample.goal_image = render_gray(scene, T - 1, opts.goal_h, opts.goal_w);
  sample.task_id = scene.task_id;
  sample.camera = scene.camera;
  sample.init_config = scene.trajectory[0];
  for (int t = 0; t < T; ++t) {
    sample.gt_traj.append(tip_pose(scene.chain, scene.trajectory[t]), 0.0, 0, true, false);
  }
  return sample;
}

ConditioningBundle conditioning_from_sample(const SceneSample& sample, int task_dim) {
  ConditioningBundle cond;
  cond.visual_embed = sample.initial_image.pixels;
  cond.task_embed = Eigen::VectorXd::Zero(task_dim);
  cond.task_embed[sample.task_id % task_dim] = 1.0;
  cond.start_points = sample.flow.start_slice();
  return cond;
}

TrainSample train_sample_from(const SceneSample& sample, int task_dim) {
  TrainSample ts;
  ts.flow = sample.flow;
  ts.goal = sample.goal_image;
  ts.cond = conditioning_from_sample(sample, task_dim);
  return ts;
}

namespace {

void write_labels(const std::vector<int>& labels, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot open " + path + " for write");
  write_u32(os, static_cast<std::uint32_t>(labels.size()));
  for (int v : labels) write_u32(os, static_cast<std::uint32_t>(v));
}

std::vector<int> read_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::uint32_t n = read_u32(is);
  std::vector<int> labels(n);
  for (std::uint32_t i = 0; i < n; ++i) labels[i] = static_cast<int>(read_u32(is));
  return labels;
}

void write_config(const JointConfig& q, const std::string& path) {
  std::ostringstream os;
  os << "dof " << q.size() << "\n";
  char buf[40];
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", q[i]);
    os << buf << (i + 1 < q.size() ? " " : "");
  }
  os << "\n";
  std::string text = os.str();
  write_file_bytes(path, text.data(), text.size());
}

JointConfig read_config(const std::string& path) {
  std::vector<char> bytes = read_file_bytes(path);
  std::istringstream is(std::string(bytes.begin(), bytes.end()));
  std::string key;
  int dof = 0;
  if (!(is >> key >> dof) || key != "dof" || dof < 0) {
    throw Error(ErrorCode::kFormatError, "config file: bad header in " + path);
  }
  JointConfig q(dof);
  for (int i = 0; i < dof; ++i) {
    if (!(is >> q[i])) throw Error(ErrorCode::kFormatError, "config file: truncated " + path);
  }
  return q;
}

}  // namespace

void export_dataset(const Dataset& dataset, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["scene_count"] = dataset.samples.size();
  manifest["n_points"] = dataset.n_points;
  manifest["horizon"] = dataset.horizon;
  manifest["geometry_source"] = "collision-else-visual-else-default";
  manifest["urdf"] = "robot.urdf";

  std::string urdf_path = dir + "/robot.urdf";
  std::string urdf_text = serialize_urdf(dataset.chain);
  write_file_bytes(urdf_path, urdf_text.data(), urdf_text.size());
  manifest["urdf_crc32"] = crc32_of_file(urdf_path);

  nlohmann::json scenes = nlohmann::json::array();
  for (std::size_t k = 0; k < dataset.samples.size(); ++k) {
    const SceneSample& s = dataset.samples[k];
    std::string scene_dir = "scene_" + std::to_string(k);
    fs::create_directories(dir + "/" + scene_dir);
    auto path = [&](const std::string& name) { return dir + "/" + scene_dir + "/" + name; };

    save_flow(s.flow, path("flow.bin"));
    for (std::size_t t = 0; t < s.depths.size(); ++t) {
      save_depth(s.depths[t], path("depth_" + std::to_string(t) + ".bin"));
    }
    save_gray(s.initial_image, path("init.bin"));
    save_gray(s.goal_image, path("goal.bin"));
    write_labels(s.group_labels, path("labels.bin"));
    save_trajectory(s.gt_traj, path("gt_traj.csv"));
    save_camera(s.camera, path("camera.txt"));
    write_config(s.init_config, path("init_config.txt"));

    nlohmann::json files;
    std::vector<std::string> names = {"flow.bin",    "init.bin",   "goal.bin",
                                      "labels.bin",  "gt_traj.csv", "camera.txt",
                                      "init_config.txt"};
    for (std::size_t t = 0; t < s.depths.size(); ++t) {
      names.push_back("depth_" + std::to_string(t) + ".bin");
    }
    for (const std::string& name : names) files[name] = crc32_of_file(path(name));

    nlohmann::json entry;
    entry["dir"] = scene_dir;
    entry["task_id"] = s.task_id;
    entry["files"] = files;
    scenes.push_back(entry);
  }
  manifest["scenes"] = scenes;

  std::string manifest_text = manifest.dump(2);
  manifest_text.push_back('\n');
  write_file_bytes(dir + "/manifest.json", manifest_text.data(), manifest_text.size());
}

Dataset import_dataset(const std::string& dir) {
  nlohmann::json manifest;
  try {
    std::vector<char> bytes = read_file_bytes(dir + "/manifest.json");
    manifest = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::kCorruptManifest, std::string("manifest.json: ") + e.what());
  }
  for (const char* key : {"format_version", "scene_count", "n_points", "horizon", "scenes",
                          "urdf", "urdf_crc32"}) {
    if (!manifest.contains(key)) {
      throw Error(ErrorCode::kCorruptManifest, std::string("manifest.json: missing ") + key);
    }
  }

  Dataset out;
  out.n_points = manifest["n_points"].get<int>();
  out.horizon = manifest["horizon"].get<int>();

  std::string urdf_path = dir + "/" + manifest["urdf"].get<std::string>();
  if (crc32_of_file(urdf_path) != manifest["urdf_crc32"].get<std::uint32_t>()) {
    throw Error(ErrorCode::kChecksumFail, "checksum mismatch on " + urdf_path);
  }
  std::vector<char> urdf_bytes = read_file_bytes(urdf_path);
  out.chain = parse_urdf(std::string(urdf_bytes.begin(), urdf_bytes.end()));

  for (const nlohmann::json& entry : manifest["scenes"]) {
    std::string scene_dir = dir + "/" + entry["dir"].get<std::string>();
    const nlohmann::json& files = entry["files"];
    auto check = [&](const std::string& name) {
      std::string path = scene_dir + "/" + name;
      if (!files.contains(name)) {
        throw Error(ErrorCode::kCorruptManifest, "manifest.json: no checksum for " + name);
      }
      if (crc32_of_file(path) != files[name].get<std::uint32_t>()) {
        throw Error(ErrorCode::kChecksumFail, "checksum mismatch on " + path);
      }
      return path;
    };

    SceneSample s;
    s.flow = load_flow(check("flow.bin"));
    if (s.flow.n_points != out.n_points || s.flow.horizon != out.horizon) {
      throw Error(ErrorCode::kShapeMismatch, "flow.bin shape disagrees with manifest");
    }
    for (int t = 0; t < out.horizon; ++t) {
      DepthMap depth = load_depth(check("depth_" + std::to_string(t) + ".bin"));
      std::vector<int> mask;
      for (std::size_t i = 0; i < depth.data.size(); ++i) {
        if (depth.data[i] == -1.0f) mask.push_back(static_cast<int>(i));
      }
      s.depths.push_back(std::move(depth));
      s.invalid_masks.push_back(std::move(mask));
    }
    s.initial_image = load_gray(check("init.bin"));
    s.goal_image = load_gray(check("goal.bin"));
    s.group_labels = read_labels(check("labels.bin"));
    if (s.group_labels.size() != static_cast<std::size_t>(out.n_points)) {
      throw Error(ErrorCode::kShapeMismatch, "labels.bin length disagrees with manifest");
    }
    s.gt_traj = load_trajectory(check("gt_traj.csv"));
    s.camera = load_camera(check("camera.txt"));
    s.init_config = read_config(check("init_config.txt"));
    s.task_id = entry["task_id"].get<int>();
    out.samples.push_back(std::move(s));
  }
  if (out.samples.size() != manifest["scene_count"].get<std::size_t>()) {
    throw Error(ErrorCode::kCorruptManifest, "manifest.json: scene_count disagrees");
  }
  return out;
}

}  // namespace ecflow
