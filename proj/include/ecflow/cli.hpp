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

#ifndef ECFLOW_CLI_HPP_
#define ECFLOW_CLI_HPP_

#include <cstdint>
#include <map>
#include <string>

#include "ecflow/errors.hpp"

namespace ecflow {

// Flat key=value run configuration. Every command resolves its full parameter
// set (defaults applied, flags folded in) and writes the result next to its
// outputs; replaying that snapshot with the same binary reproduces the run
// byte for byte.
struct RunConfig {
  std::map<std::string, std::string> values;

  bool has(const std::string& key) const { return values.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values[key] = value; }

  std::string get_str(const std::string& key) const;  // throws MissingInput
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
};

// "key = value" lines, '#' comments, keys sorted on write.
RunConfig parse_run_config(const std::string& text);
std::string run_config_to_text(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

// Process exit code for an error class; 0 is success, 1 unclassified.
int exit_code_for(ErrorCode code);

// Subcommand bodies. Each validates inputs, runs, writes outputs plus the
// resolved snapshot, and prints a one-line summary to stdout.
void cmd_gen_data(RunConfig cfg);
void cmd_train(RunConfig cfg);
void cmd_sample(RunConfig cfg);
void cmd_solve(RunConfig cfg);
void cmd_eval(RunConfig cfg);
void cmd_report(RunConfig cfg);

// Dispatch on cfg["command"]; used by the replay entry point.
void run_command(RunConfig cfg);

}  // namespace ecflow

#endif  // ECFLOW_CLI_HPP_
