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

#include "ecflow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <vector>

#include "ecflow/blob_io.hpp"
#include "ecflow/camera.hpp"
#include "ecflow/denoiser.hpp"
#include "ecflow/diffusion.hpp"
#include "ecflow/kinematics.hpp"
#include "ecflow/oracle.hpp"
#include "ecflow/rng.hpp"
#include "ecflow/solver.hpp"
#include "ecflow/trajectory.hpp"
#include "ecflow/urdf_model.hpp"

namespace ecflow {

namespace {

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void require_file(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingInput, "missing input: " + path);
  }
}

// get-then-set-back, so the snapshot carries every resolved value
std::string res_str(RunConfig& cfg, const std::string& key, const std::string& fallback) {
  std::string v = cfg.get_str(key, fallback);
  cfg.set(key, v);
  return v;
}

int res_int(RunConfig& cfg, const std::string& key, int fallback) {
  int v = cfg.get_int(key, fallback);
  cfg.set(key, std::to_string(v));
  return v;
}

double res_double(RunConfig& cfg, const std::string& key, double fallback) {
  double v = cfg.get_double(key, fallback);
  cfg.set(key, fmt_double(v));
  return v;
}

bool res_bool(RunConfig& cfg, const std::string& key, bool fallback) {
  bool v = cfg.get_bool(key, fallback);
  cfg.set(key, v ? "1" : "0");
  return v;
}

std::uint64_t res_u64(RunConfig& cfg, const std::string& key, std::uint64_t fallback) {
  std::uint64_t v = cfg.get_u64(key, fallback);
  cfg.set(key, std::to_string(v));
  return v;
}

void write_text(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

std::string read_text(const std::string& path) {
  std::vector<char> bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      row.push_back(line.substr(pos, comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd parse_weights(const std::string& spec, int dof) {
  if (spec == "full") return Eigen::VectorXd();
  if (spec == "eef-only") {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(dof);
    w[dof - 1] = 1.0;
    return w;
  }
  if (spec.rfind("file:", 0) == 0) {
    std::string path = spec.substr(5);
    require_file(path);
    std::istringstream is(read_text(path));
    std::vector<double> vals;
    double v;
    while (is >> v) vals.push_back(v);
    if (static_cast<int>(vals.size()) != dof) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "weights file has " + std::to_string(vals.size()) + " entries for dof " +
                      std::to_string(dof));
    }
    Eigen::VectorXd w(dof);
    for (int i = 0; i < dof; ++i) w[i] = vals[i];
    return w;
  }
  throw Error(ErrorCode::kFormatError, "weights must be full, eef-only, or file:<path>");
}

std::vector<JointConfig> read_config_rows(const std::string& path, int dof) {
  require_file(path);
  std::istringstream is(read_text(path));
  std::vector<JointConfig> rows;
  std::string line;
  while (std::getline(is, line)) {
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    JointConfig q(dof);
    for (int i = 0; i < dof; ++i) {
      if (!(ls >> q[i])) {
        throw Error(ErrorCode::kFormatError, "config row needs " + std::to_string(dof) +
                                                 " values: " + path);
      }
    }
    rows.push_back(q);
  }
  return rows;
}

SolverConfig solver_config_from(RunConfig& cfg, const KinematicChain& chain, int horizon) {
  SolverConfig sc;
  sc.motion_threshold = res_double(cfg, "motion_threshold", 0.5);
  sc.visibility_threshold = res_double(cfg, "visibility_threshold", 0.5);
  sc.max_opt_iters = res_int(cfg, "max_opt_iters", 60);
  sc.opt_tolerance = res_double(cfg, "opt_tolerance", 1e-10);
  sc.warm_start = res_bool(cfg, "warm_start", true);
  sc.skip_degenerate = res_bool(cfg, "skip_degenerate", false);
  sc.joint_weights = parse_weights(res_str(cfg, "weights", "full"), chain.dof);
  std::string source = res_str(cfg, "config_source", "chained");
  if (source == "chained") {
    sc.config_source = ConfigSource::kChained;
  } else if (source == "provided") {
    sc.config_source = ConfigSource::kProvided;
    sc.provided_configs = read_config_rows(cfg.get_str("configs_file"), chain.dof);
    cfg.set("configs_file", cfg.get_str("configs_file"));
    if (static_cast<int>(sc.provided_configs.size()) != horizon) {
      throw Error(ErrorCode::kShapeMismatch, "configs_file must have one row per frame");
    }
  } else {
    throw Error(ErrorCode::kFormatError, "config_source must be chained or provided");
  }
  return sc;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// --- minimal SVG plotting -------------------------------------------------

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string svg_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct Panel {
  double x0, y0, w, h;  // plot area in page coordinates
  double xmin, xmax, ymin, ymax;
  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void panel_frame(std::ostringstream& os, const Panel& p, const std::string& title,
                 bool log_y) {
  os << "<rect x='" << svg_num(p.x0) << "' y='" << svg_num(p.y0) << "' width='" << svg_num(p.w)
     << "' height='" << svg_num(p.h) << "' fill='none' stroke='#444'/>\n";
  os << "<text x='" << svg_num(p.x0) << "' y='" << svg_num(p.y0 - 8)
     << "' font-size='13' fill='#000'>" << title << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    double fx = p.xmin + (p.xmax - p.xmin) * i / 4.0;
    double fy = p.ymin + (p.ymax - p.ymin) * i / 4.0;
    os << "<text x='" << svg_num(p.px(fx)) << "' y='" << svg_num(p.y0 + p.h + 14)
       << "' font-size='10' text-anchor='middle' fill='#333'>" << svg_label(fx) << "</text>\n";
    std::string ylab = log_y ? ("1e" + svg_label(fy)) : svg_label(fy);
    os << "<text x='" << svg_num(p.x0 - 4) << "' y='" << svg_num(p.py(fy) + 3)
       << "' font-size='10' text-anchor='end' fill='#333'>" << ylab << "</text>\n";
  }
}

void panel_polyline(std::ostringstream& os, const Panel& p, const std::vector<double>& xs,
                    const std::vector<double>& ys, const std::string& color) {
  os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    os << svg_num(p.px(xs[i])) << "," << svg_num(p.py(ys[i])) << " ";
  }
  os << "'/>\n";
}

}  // namespace

// --- RunConfig ------------------------------------------------------------

std::string RunConfig::get_str(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) {
    throw Error(ErrorCode::kMissingInput, "missing required config key: " + key);
  }
  return it->second;
}

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
  auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kFormatError, "config key " + key + ": not an integer");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kFormatError, "config key " + key + ": not a number");
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw Error(ErrorCode::kFormatError, "config key " + key + ": not a boolean");
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kFormatError, "config key " + key + ": not an unsigned integer");
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trimmed(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kFormatError,
                  "config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trimmed(t.substr(0, eq));
    std::string value = trimmed(t.substr(eq + 1));
    if (key.empty()) {
      throw Error(ErrorCode::kFormatError, "config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.values[key] = value;
  }
  return cfg;
}

std::string run_config_to_text(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, value] : cfg.values) os << key << " = " << value << "\n";
  return os.str();
}

RunConfig load_run_config(const std::string& path) {
  require_file(path);
  return parse_run_config(read_text(path));
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  write_text(path, run_config_to_text(cfg));
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingInput:
      return 2;
    case ErrorCode::kFormatError:
    case ErrorCode::kHeaderMismatch:
    case ErrorCode::kMalformedXml:
    case ErrorCode::kCorruptManifest:
    case ErrorCode::kChecksumFail:
      return 3;
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kBadSteps:
    case ErrorCode::kBadTimestep:
    case ErrorCode::kBadHorizon:
    case ErrorCode::kBadFrameIndex:
    case ErrorCode::kBadAxis:
    case ErrorCode::kMissingLimit:
    case ErrorCode::kUnsupportedJoint:
    case ErrorCode::kUnknownLink:
    case ErrorCode::kNotAncestor:
    case ErrorCode::kEmptyChain:
    case ErrorCode::kBranchingChain:
      return 4;
    case ErrorCode::kDegenerateStep:
      return 5;
    case ErrorCode::kIoError:
      return 6;
    case ErrorCode::kEmptyDataset:
    case ErrorCode::kNonfiniteLoss:
    case ErrorCode::kDivergedLoss:
      return 7;
    case ErrorCode::kBehindCamera:
    case ErrorCode::kInvalidDepth:
    case ErrorCode::kOutOfImage:
      return 8;
    default:
      return 1;
  }
}

// --- commands -------------------------------------------------------------

void cmd_gen_data(RunConfig cfg) {
  cfg.set("command", "gen-data");
  std::string urdf_path = res_str(cfg, "urdf", "");
  std::string camera_path = res_str(cfg, "camera", "");
  std::string out = cfg.get_str("out");
  require_file(urdf_path);
  require_file(camera_path);
  int scenes = res_int(cfg, "scenes", 8);
  int tasks = res_int(cfg, "tasks", 8);
  int horizon = res_int(cfg, "horizon", 8);
  int num_points = res_int(cfg, "num_points", 400);
  double invalid_fraction = res_double(cfg, "invalid_fraction", 0.0);
  bool occlude = res_bool(cfg, "occlude", false);
  int min_occluded = res_int(cfg, "min_occluded_frames", 3);
  int jobs = res_int(cfg, "jobs", 1);
  std::uint64_t seed = res_u64(cfg, "seed", 0);

  std::string urdf_text = read_text(urdf_path);
  KinematicChain chain = parse_urdf(urdf_text);
  CameraModel camera = load_camera(camera_path);

  SceneOptions sopts;
  sopts.horizon = horizon;
  SampleOptions popts;
  popts.n_points = num_points;
  popts.invalid_depth_fraction = invalid_fraction;

  Dataset ds;
  ds.chain = chain;
  ds.n_points = num_points;
  ds.horizon = horizon;
  ds.samples.resize(scenes);

  ExecConfig exec = jobs > 1 ? ExecConfig::parallel(jobs) : ExecConfig::serial();
  std::vector<std::string> worker_err(scenes);
  parallel_for(scenes, exec, [&](std::int64_t k) {
    try {
      int task = static_cast<int>(k) % tasks;
      std::uint64_t scene_seed = derive_seed(seed, static_cast<std::uint64_t>(k), 0xD5);
      SyntheticScene scene =
          occlude ? make_occluded_scene(chain, camera, task, scene_seed, min_occluded, sopts)
                  : make_scene(chain, camera, task, scene_seed, sopts);
      ds.samples[k] =
          make_sample(scene, derive_seed(seed, static_cast<std::uint64_t>(k), 0x5A), popts);
    } catch (const std::exception& e) {
      worker_err[k] = e.what();
    }
  });
  for (int k = 0; k < scenes; ++k) {
    if (!worker_err[k].empty()) {
      throw Error(ErrorCode::kBadHorizon,
                  "scene " + std::to_string(k) + ": " + worker_err[k]);
    }
  }

  export_dataset(ds, out);
  std::string snapshot = res_str(cfg, "snapshot", out + "/run_config.txt");
  save_run_config(cfg, snapshot);
  std::printf("wrote %d scenes to %s\n", scenes, out.c_str());
}

void cmd_train(RunConfig cfg) {
  cfg.set("command", "train");
  std::string dataset_dir = cfg.get_str("dataset");
  std::string model_out = cfg.get_str("model_out");
  require_file(dataset_dir + "/manifest.json");
  std::string loss_csv = res_str(cfg, "loss_csv", model_out + ".loss.csv");
  int epochs = res_int(cfg, "epochs", 200);
  int batch = res_int(cfg, "batch", 8);
  double lr_flow = res_double(cfg, "lr_flow", 5e-5);
  double lr_image = res_double(cfg, "lr_image", 1e-4);
  double lambda = res_double(cfg, "lambda", 0.4);
  int steps = res_int(cfg, "steps", 250);
  int hidden = res_int(cfg, "hidden", 256);
  int temb = res_int(cfg, "temb", 64);
  int proj = res_int(cfg, "proj", 64);
  int task_dim = res_int(cfg, "task_dim", 8);
  int jobs = res_int(cfg, "jobs", 1);
  std::uint64_t seed = res_u64(cfg, "seed", 0);

  Dataset ds = import_dataset(dataset_dir);
  if (ds.samples.empty()) throw Error(ErrorCode::kEmptyDataset, "dataset has no scenes");

  DenoiserDims dims;
  dims.n_points = ds.n_points;
  dims.horizon = ds.horizon;
  dims.goal_h = ds.samples[0].goal_image.height;
  dims.goal_w = ds.samples[0].goal_image.width;
  dims.task_dim = task_dim;
  dims.visual_dim = static_cast<int>(ds.samples[0].initial_image.pixels.size());
  dims.hidden = hidden;
  dims.temb_dim = temb;
  dims.proj_dim = proj;
  dims.schedule_steps = steps;
  dims.lambda = lambda;

  std::vector<TrainSample> samples;
  samples.reserve(ds.samples.size());
  for (const SceneSample& s : ds.samples) samples.push_back(train_sample_from(s, task_dim));

  DenoiserParams params = init_denoiser(dims, seed);
  NoiseSchedule schedule = cosine_schedule(steps);
  TrainOptions topts;
  topts.epochs = epochs;
  topts.batch = batch;
  topts.lr_flow = lr_flow;
  topts.lr_image = lr_image;
  topts.seed = seed;
  topts.exec = jobs > 1 ? ExecConfig::parallel(jobs) : ExecConfig::serial();
  std::vector<double> losses = train(params, samples, schedule, topts);

  save_model(params, model_out);
  std::ostringstream os;
  os << "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) os << e << "," << fmt_double(losses[e]) << "\n";
  write_text(loss_csv, os.str());

  std::string snapshot = res_str(cfg, "snapshot", model_out + ".config.txt");
  save_run_config(cfg, snapshot);
  std::printf("trained %d epochs, final loss %.6g, model %s\n", epochs,
              losses.empty() ? 0.0 : losses.back(), model_out.c_str());
}

void cmd_sample(RunConfig cfg) {
  cfg.set("command", "sample");
  std::string model_path = cfg.get_str("model");
  std::string dataset_dir = cfg.get_str("dataset");
  std::string out_flow = cfg.get_str("out_flow");
  std::string out_goal = cfg.get_str("out_goal");
  require_file(model_path);
  require_file(dataset_dir + "/manifest.json");
  int scene = res_int(cfg, "scene", 0);
  std::uint64_t seed = res_u64(cfg, "seed", 0);

  DenoiserParams params = load_model(model_path);
  int steps = res_int(cfg, "steps", params.dims.schedule_steps);
  Dataset ds = import_dataset(dataset_dir);
  if (scene < 0 || scene >= static_cast<int>(ds.samples.size())) {
    throw Error(ErrorCode::kShapeMismatch, "scene index out of range");
  }
  ConditioningBundle cond = conditioning_from_sample(ds.samples[scene], params.dims.task_dim);
  NoiseSchedule schedule = cosine_schedule(params.dims.schedule_steps);
  auto [flow, goal] = ddim_sample(params, cond, schedule, steps, seed);
  save_flow(flow, out_flow);
  save_gray(goal, out_goal);

  std::string snapshot = res_str(cfg, "snapshot", out_flow + ".config.txt");
  save_run_config(cfg, snapshot);
  std::printf("sampled flow %s goal %s\n", out_flow.c_str(), out_goal.c_str());
}

void cmd_solve(RunConfig cfg) {
  cfg.set("command", "solve");
  std::string dataset_dir = cfg.get_str("dataset");
  std::string out = cfg.get_str("out");
  require_file(dataset_dir + "/manifest.json");
  int scene = res_int(cfg, "scene", 0);
  double sigma = res_double(cfg, "flow_noise_sigma", 0.0);
  std::uint64_t seed = res_u64(cfg, "seed", 0);

  Dataset ds = import_dataset(dataset_dir);
  if (scene < 0 || scene >= static_cast<int>(ds.samples.size())) {
    throw Error(ErrorCode::kShapeMismatch, "scene index out of range");
  }
  const SceneSample& s = ds.samples[scene];
  SolverConfig sc = solver_config_from(cfg, ds.chain, ds.horizon);

  FlowTensor flow = s.flow;
  if (cfg.has("flow")) {
    std::string flow_path = cfg.get_str("flow");
    require_file(flow_path);
    flow = load_flow(flow_path);
    if (!flow.same_shape(s.flow)) {
      throw Error(ErrorCode::kShapeMismatch, "flow override shape disagrees with dataset");
    }
  }
  if (sigma > 0.0) {
    perturb_flow(flow, sigma, s.camera.width, s.camera.height,
                 derive_seed(seed, static_cast<std::uint64_t>(scene), 0x2105E));
  }

  PoseTrajectory traj = solve_trajectory(flow, s.depths, s.camera, ds.chain, s.init_config, sc);
  save_trajectory(traj, out);

  double mean_res = 0.0;
  int degen = 0;
  for (int t = 0; t < traj.size(); ++t) {
    mean_res += traj.residuals[t];
    degen += traj.degenerate[t] ? 1 : 0;
  }
  mean_res /= std::max(1, traj.size());

  std::string snapshot = res_str(cfg, "snapshot", out + ".config.txt");
  save_run_config(cfg, snapshot);
  std::printf("solved %d steps, mean residual %.6g px, %d degenerate, %s\n", traj.size() - 1,
              mean_res, degen, out.c_str());
}

void cmd_eval(RunConfig cfg) {
  cfg.set("command", "eval");
  std::string dataset_dir = cfg.get_str("dataset");
  std::string out = cfg.get_str("out");
  require_file(dataset_dir + "/manifest.json");
  double thresh_m = res_double(cfg, "success_thresh_m", 0.01);
  double thresh_deg = res_double(cfg, "success_thresh_deg", 1.0);
  std::uint64_t seed = res_u64(cfg, "seed", 0);

  Dataset ds = import_dataset(dataset_dir);
  const int n_scenes = static_cast<int>(ds.samples.size());
  std::ostringstream os;

  if (cfg.has("noise_sweep")) {
    std::string sweep = res_str(cfg, "noise_sweep", "");
    int mc = res_int(cfg, "mc_seeds", 10);
    SolverConfig sc = solver_config_from(cfg, ds.chain, ds.horizon);
    sc.skip_degenerate = true;  // a noisy draw must not abort the sweep

    std::vector<double> sigmas;
    std::istringstream ss(sweep);
    std::string tok;
    while (std::getline(ss, tok, ',')) sigmas.push_back(std::stod(trimmed(tok)));

    os << "sigma,median_translation_m,mean_translation_m,trajectories\n";
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
      std::vector<double> errors;
      int count = 0;
      for (int k = 0; k < n_scenes; ++k) {
        const SceneSample& s = ds.samples[k];
        for (int rep = 0; rep < mc; ++rep) {
          FlowTensor flow = s.flow;
          if (sigmas[si] > 0.0) {
            perturb_flow(flow, sigmas[si], s.camera.width, s.camera.height,
                         derive_seed(seed, static_cast<std::uint64_t>(k) * 1000 + rep, si));
          }
          PoseTrajectory traj =
              solve_trajectory(flow, s.depths, s.camera, ds.chain, s.init_config, sc);
          TrajectoryError err = compare_trajectories(traj, s.gt_traj);
          for (std::size_t t = 1; t < err.translation_m.size(); ++t) {
            errors.push_back(err.translation_m[t]);
          }
          ++count;
        }
      }
      double mean = errors.empty()
                        ? 0.0
                        : std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
      os << fmt_double(sigmas[si]) << "," << fmt_double(median_of(errors)) << ","
         << fmt_double(mean) << "," << count << "\n";
    }
    write_text(out, os.str());
    std::string snapshot = res_str(cfg, "snapshot", out + ".config.txt");
    save_run_config(cfg, snapshot);
    std::printf("noise sweep over %zu sigmas, metrics %s\n", sigmas.size(), out.c_str());
    return;
  }

  if (cfg.get_bool("compare_weights", false)) {
    res_bool(cfg, "compare_weights", false);
    SolverConfig base = solver_config_from(cfg, ds.chain, ds.horizon);
    base.skip_degenerate = true;  // eef-only degenerates by design under occlusion

    double sums[2] = {0.0, 0.0};
    int wins = 0;
    for (int k = 0; k < n_scenes; ++k) {
      const SceneSample& s = ds.samples[k];
      double means[2];
      for (int m = 0; m < 2; ++m) {
        SolverConfig sc = base;
        sc.joint_weights = parse_weights(m == 0 ? "full" : "eef-only", ds.chain.dof);
        PoseTrajectory traj =
            solve_trajectory(s.flow, s.depths, s.camera, ds.chain, s.init_config, sc);
        means[m] = compare_trajectories(traj, s.gt_traj).mean_translation;
        sums[m] += means[m];
      }
      if (means[0] <= means[1]) ++wins;
    }
    os << "label,mean_translation_m\n";
    os << "full," << fmt_double(sums[0] / std::max(1, n_scenes)) << "\n";
    os << "eef_only," << fmt_double(sums[1] / std::max(1, n_scenes)) << "\n";
    write_text(out, os.str());
    std::string snapshot = res_str(cfg, "snapshot", out + ".config.txt");
    save_run_config(cfg, snapshot);
    std::printf("full-joint beats eef-only on %d/%d scenes, metrics %s\n", wins, n_scenes,
                out.c_str());
    return;
  }

  if (!cfg.has("traj") && !cfg.has("traj_dir")) {
    throw Error(ErrorCode::kMissingInput, "eval needs traj, traj_dir, noise_sweep, or compare_weights");
  }

  os << "scene,mean_translation_m,max_translation_m,mean_rotation_deg,max_rotation_deg,"
        "mean_residual_px,degenerate_steps,success\n";
  int successes = 0, total = 0;
  auto eval_one = [&](int k, const std::string& path) {
    require_file(path);
    PoseTrajectory est = load_trajectory(path);
    TrajectoryError err = compare_trajectories(est, ds.samples[k].gt_traj);
    double mean_res = 0.0;
    int degen = 0;
    for (int t = 0; t < est.size(); ++t) {
      mean_res += est.residuals[t];
      degen += est.degenerate[t] ? 1 : 0;
    }
    mean_res /= std::max(1, est.size());
    const double deg = 180.0 / M_PI;
    bool success = err.max_translation <= thresh_m && err.max_rotation * deg <= thresh_deg;
    os << k << "," << fmt_double(err.mean_translation) << "," << fmt_double(err.max_translation)
       << "," << fmt_double(err.mean_rotation * deg) << "," << fmt_double(err.max_rotation * deg)
       << "," << fmt_double(mean_res) << "," << degen << "," << (success ? 1 : 0) << "\n";
    successes += success ? 1 : 0;
    ++total;
  };

  if (cfg.has("traj")) {
    int scene = res_int(cfg, "scene", 0);
    eval_one(scene, res_str(cfg, "traj", ""));
  } else {
    std::string dir = res_str(cfg, "traj_dir", "");
    for (int k = 0; k < n_scenes; ++k) eval_one(k, dir + "/traj_" + std::to_string(k) + ".csv");
  }
  write_text(out, os.str());
  std::string snapshot = res_str(cfg, "snapshot", out + ".config.txt");
  save_run_config(cfg, snapshot);
  std::printf("success %d/%d, metrics %s\n", successes, total, out.c_str());
}

void cmd_report(RunConfig cfg) {
  cfg.set("command", "report");
  std::string out = cfg.get_str("out");
  std::string title = res_str(cfg, "title", "run report");
  if (!cfg.has("loss_csv") && !cfg.has("sweep_csv") && !cfg.has("compare_csv")) {
    throw Error(ErrorCode::kMissingInput, "report needs loss_csv, sweep_csv, or compare_csv");
  }

  const double width = 640.0, panel_h = 200.0, left = 64.0, right = 24.0, top = 40.0,
               gap = 64.0;
  std::ostringstream body;
  double y = top + 20.0;
  int panels = 0;

  auto numeric_rows = [](const std::vector<std::vector<std::string>>& rows, std::size_t cols) {
    std::vector<std::vector<double>> data;
    for (std::size_t i = 1; i < rows.size(); ++i) {  // skip header
      if (rows[i].size() < cols) continue;
      std::vector<double> vals;
      bool ok = true;
      for (std::size_t c = 0; c < cols; ++c) {
        try {
          vals.push_back(std::stod(rows[i][c]));
        } catch (const std::exception&) {
          ok = false;
          break;
        }
      }
      if (ok) data.push_back(vals);
    }
    return data;
  };

  if (cfg.has("loss_csv")) {
    std::string path = res_str(cfg, "loss_csv", "");
    require_file(path);
    auto data = numeric_rows(parse_csv(read_text(path)), 2);
    if (data.size() >= 2) {
      std::vector<double> xs, ys;
      bool log_ok = true;
      for (const auto& row : data) log_ok = log_ok && row[1] > 0.0;
      for (const auto& row : data) {
        xs.push_back(row[0]);
        ys.push_back(log_ok ? std::log10(row[1]) : row[1]);
      }
      Panel p{left, y, width - left - right, panel_h,
              *std::min_element(xs.begin(), xs.end()), *std::max_element(xs.begin(), xs.end()),
              *std::min_element(ys.begin(), ys.end()), *std::max_element(ys.begin(), ys.end())};
      if (p.ymax - p.ymin < 1e-12) p.ymax = p.ymin + 1.0;
      panel_frame(body, p, "training loss vs epoch", log_ok);
      panel_polyline(body, p, xs, ys, "#1f6fb3");
      y += panel_h + gap;
      ++panels;
    }
  }

  if (cfg.has("sweep_csv")) {
    std::string path = res_str(cfg, "sweep_csv", "");
    require_file(path);
    auto data = numeric_rows(parse_csv(read_text(path)), 2);
    if (!data.empty()) {
      std::vector<double> xs, ys;
      for (const auto& row : data) {
        xs.push_back(row[0]);
        ys.push_back(row[1]);
      }
      Panel p{left, y, width - left - right, panel_h, *std::min_element(xs.begin(), xs.end()),
              std::max(*std::max_element(xs.begin(), xs.end()), 1e-9), 0.0,
              std::max(*std::max_element(ys.begin(), ys.end()) * 1.1, 1e-9)};
      panel_frame(body, p, "median translation error vs flow noise (px)", false);
      panel_polyline(body, p, xs, ys, "#b3441f");
      for (std::size_t i = 0; i < xs.size(); ++i) {
        body << "<circle cx='" << svg_num(p.px(xs[i])) << "' cy='" << svg_num(p.py(ys[i]))
             << "' r='3' fill='#b3441f'/>\n";
      }
      y += panel_h + gap;
      ++panels;
    }
  }

  if (cfg.has("compare_csv")) {
    std::string path = res_str(cfg, "compare_csv", "");
    require_file(path);
    auto rows = parse_csv(read_text(path));
    std::vector<std::pair<std::string, double>> bars;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() < 2) continue;
      try {
        bars.emplace_back(rows[i][0], std::stod(rows[i][1]));
      } catch (const std::exception&) {
      }
    }
    if (!bars.empty()) {
      double vmax = 1e-12;
      for (const auto& [label, v] : bars) vmax = std::max(vmax, v);
      Panel p{left, y, width - left - right, panel_h, 0.0, 1.0, 0.0, vmax * 1.15};
      panel_frame(body, p, "mean translation error by weighting", false);
      double slot = p.w / bars.size();
      for (std::size_t i = 0; i < bars.size(); ++i) {
        double bx = p.x0 + slot * i + slot * 0.2;
        double bw = slot * 0.6;
        double by = p.py(bars[i].second);
        body << "<rect x='" << svg_num(bx) << "' y='" << svg_num(by) << "' width='" << svg_num(bw)
             << "' height='" << svg_num(p.y0 + p.h - by) << "' fill='#3a7d44'/>\n";
        body << "<text x='" << svg_num(bx + bw / 2) << "' y='" << svg_num(p.y0 + p.h + 14)
             << "' font-size='11' text-anchor='middle'>" << bars[i].first << "</text>\n";
        body << "<text x='" << svg_num(bx + bw / 2) << "' y='" << svg_num(by - 4)
             << "' font-size='10' text-anchor='middle'>" << svg_label(bars[i].second)
             << "</text>\n";
      }
      y += panel_h + gap;
      ++panels;
    }
  }

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << svg_num(width) << "' height='"
      << svg_num(y) << "' font-family='sans-serif'>\n";
  svg << "<rect x='0' y='0' width='" << svg_num(width) << "' height='" << svg_num(y)
      << "' fill='#fff'/>\n";
  svg << "<text x='" << svg_num(left) << "' y='24' font-size='16'>" << title << "</text>\n";
  svg << body.str() << "</svg>\n";
  write_text(out, svg.str());

  std::string snapshot = res_str(cfg, "snapshot", out + ".config.txt");
  save_run_config(cfg, snapshot);
  std::printf("report with %d panels, %s\n", panels, out.c_str());
}

void run_command(RunConfig cfg) {
  std::string command = cfg.get_str("command");
  if (command == "gen-data") {
    cmd_gen_data(std::move(cfg));
  } else if (command == "train") {
    cmd_train(std::move(cfg));
  } else if (command == "sample") {
    cmd_sample(std::move(cfg));
  } else if (command == "solve") {
    cmd_solve(std::move(cfg));
  } else if (command == "eval") {
    cmd_eval(std::move(cfg));
  } else if (command == "report") {
    cmd_report(std::move(cfg));
  } else {
    throw Error(ErrorCode::kFormatError, "unknown command: " + command);
  }
}

}  // namespace ecflow
