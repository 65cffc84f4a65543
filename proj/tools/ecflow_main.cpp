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

#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ecflow/cli.hpp"
#include "ecflow/errors.hpp"

namespace {

// Each subcommand collects string values per config key; only flags the user
// actually passed override the config file.
struct SubCmd {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> captured;
  std::map<std::string, CLI::Option*> options;

  void opt(const char* flag, const char* key, const char* desc) {
    options[key] = app->add_option(flag, captured[key], desc);
  }
  void flag(const char* name, const char* key, const char* desc) {
    options[key] = app->add_flag_callback(
        name, [this, key] { captured[key] = "1"; }, desc);
  }

  ecflow::RunConfig resolve(const std::string& command) const {
    ecflow::RunConfig cfg;
    if (!config_path.empty()) cfg = ecflow::load_run_config(config_path);
    for (const auto& [key, option] : options) {
      if (option->count() > 0) cfg.set(key, captured.at(key));
    }
    cfg.set("command", command);
    return cfg;
  }
};

SubCmd* make_sub(CLI::App& app, const char* name, const char* desc) {
  auto* sub = new SubCmd();
  sub->app = app.add_subcommand(name, desc);
  sub->app->add_option("--config", sub->config_path, "key=value config file; flags override");
  return sub;
}

void add_solver_flags(SubCmd* s) {
  s->opt("--motion-threshold", "motion_threshold", "min pixel displacement per step");
  s->opt("--visibility-threshold", "visibility_threshold", "min visibility at t and t+1");
  s->opt("--weights", "weights", "full, eef-only, or file:<path>");
  s->opt("--config-source", "config_source", "chained or provided");
  s->opt("--configs-file", "configs_file", "per-frame joint configs (provided mode)");
  s->flag("--skip-degenerate", "skip_degenerate", "carry the previous pose on degenerate steps");
  s->opt("--max-opt-iters", "max_opt_iters", "pose search iteration cap");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecflow: flow-conditioned end-effector trajectory pipeline"};
  app.require_subcommand(1);
  app.footer(
      "exit codes: 0 ok, 1 unclassified, 2 missing input, 3 format/checksum,\n"
      "4 shape/domain, 5 degenerate step, 6 io, 7 training, 8 camera domain");

  SubCmd* gen = make_sub(app, "gen-data", "render a synthetic scene corpus to a dataset dir");
  gen->opt("--urdf", "urdf", "robot description file");
  gen->opt("--camera", "camera", "camera calibration file");
  gen->opt("--out", "out", "dataset output directory");
  gen->opt("--scenes", "scenes", "number of scenes");
  gen->opt("--tasks", "tasks", "distinct task ids");
  gen->opt("--horizon", "horizon", "frames per scene");
  gen->opt("--num-points", "num_points", "tracked points per scene");
  gen->opt("--invalid-fraction", "invalid_fraction", "fraction of depth cells invalidated");
  gen->flag("--occlude", "occlude", "stage an occluder over the last moving group");
  gen->opt("--min-occluded-frames", "min_occluded_frames", "frames the occluder must cover");
  gen->opt("--jobs", "jobs", "parallel scene workers");
  gen->opt("--seed", "seed", "master seed");
  gen->opt("--snapshot", "snapshot", "resolved config path");

  SubCmd* train = make_sub(app, "train", "fit the flow/goal denoiser on a dataset");
  train->opt("--dataset", "dataset", "dataset directory");
  train->opt("--model-out", "model_out", "model output path");
  train->opt("--loss-csv", "loss_csv", "per-epoch loss curve path");
  train->opt("--epochs", "epochs", "training epochs");
  train->opt("--batch", "batch", "batch size");
  train->opt("--lr-flow", "lr_flow", "flow branch learning rate");
  train->opt("--lr-image", "lr_image", "image branch learning rate");
  train->opt("--lambda", "lambda", "goal image loss weight");
  train->opt("--steps", "steps", "diffusion schedule steps");
  train->opt("--hidden", "hidden", "hidden layer width");
  train->opt("--temb", "temb", "timestep embedding width");
  train->opt("--proj", "proj", "conditioning projection width");
  train->opt("--task-dim", "task_dim", "one-hot task embedding width");
  train->opt("--jobs", "jobs", "gradient workers");
  train->opt("--seed", "seed", "init and shuffle seed");
  train->opt("--snapshot", "snapshot", "resolved config path");

  SubCmd* sample = make_sub(app, "sample", "draw a flow/goal prediction from a trained model");
  sample->opt("--model", "model", "trained model path");
  sample->opt("--dataset", "dataset", "dataset directory (conditioning source)");
  sample->opt("--scene", "scene", "scene index for conditioning");
  sample->opt("--steps", "steps", "reverse process steps");
  sample->opt("--seed", "seed", "noise seed");
  sample->opt("--out-flow", "out_flow", "predicted flow output path");
  sample->opt("--out-goal", "out_goal", "predicted goal image output path");
  sample->opt("--snapshot", "snapshot", "resolved config path");

  SubCmd* solve = make_sub(app, "solve", "convert flow plus depth into a pose trajectory");
  solve->opt("--dataset", "dataset", "dataset directory");
  solve->opt("--scene", "scene", "scene index");
  solve->opt("--flow", "flow", "flow file overriding the dataset's");
  solve->opt("--flow-noise-sigma", "flow_noise_sigma", "pixel noise added before solving");
  add_solver_flags(solve);
  solve->opt("--out", "out", "trajectory CSV output path");
  solve->opt("--seed", "seed", "noise seed");
  solve->opt("--snapshot", "snapshot", "resolved config path");

  SubCmd* eval = make_sub(app, "eval", "score trajectories against dataset ground truth");
  eval->opt("--dataset", "dataset", "dataset directory");
  eval->opt("--out", "out", "metrics CSV output path");
  eval->opt("--traj", "traj", "one trajectory CSV to score");
  eval->opt("--traj-dir", "traj_dir", "directory of traj_<k>.csv files");
  eval->opt("--scene", "scene", "scene index for --traj");
  eval->opt("--noise-sweep", "noise_sweep", "comma list of pixel sigmas to sweep");
  eval->opt("--mc-seeds", "mc_seeds", "Monte-Carlo repetitions per sigma");
  eval->flag("--compare-weights", "compare_weights", "score full vs eef-only weighting");
  eval->opt("--success-thresh-m", "success_thresh_m", "translation success threshold");
  eval->opt("--success-thresh-deg", "success_thresh_deg", "rotation success threshold");
  add_solver_flags(eval);
  eval->opt("--seed", "seed", "noise seed");
  eval->opt("--snapshot", "snapshot", "resolved config path");

  SubCmd* report = make_sub(app, "report", "render SVG plots from run CSVs");
  report->opt("--out", "out", "SVG output path");
  report->opt("--loss-csv", "loss_csv", "training loss curve");
  report->opt("--sweep-csv", "sweep_csv", "noise sweep metrics");
  report->opt("--compare-csv", "compare_csv", "weighting comparison metrics");
  report->opt("--title", "title", "report title");
  report->opt("--snapshot", "snapshot", "resolved config path");

  CLI::App* replay = app.add_subcommand("replay", "re-run a resolved config snapshot");
  std::string replay_path;
  replay->add_option("snapshot", replay_path, "resolved config snapshot")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (replay->parsed()) {
      ecflow::run_command(ecflow::load_run_config(replay_path));
    } else if (gen->app->parsed()) {
      ecflow::cmd_gen_data(gen->resolve("gen-data"));
    } else if (train->app->parsed()) {
      ecflow::cmd_train(train->resolve("train"));
    } else if (sample->app->parsed()) {
      ecflow::cmd_sample(sample->resolve("sample"));
    } else if (solve->app->parsed()) {
      ecflow::cmd_solve(solve->resolve("solve"));
    } else if (eval->app->parsed()) {
      ecflow::cmd_eval(eval->resolve("eval"));
    } else if (report->app->parsed()) {
      ecflow::cmd_report(report->resolve("report"));
    }
    return 0;
  } catch (const ecflow::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return ecflow::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
