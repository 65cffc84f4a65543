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

#ifndef ECFLOW_PARALLEL_HPP_
#define ECFLOW_PARALLEL_HPP_

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ecflow {

// Every parallel kernel in this project has a serial reference path; the two
// must produce bit-identical results (see tests/test_parallel.cpp). Iterations
// write to disjoint slots and reductions happen afterwards in index order, so
// the schedule cannot change the output.
enum class Exec { kSerial, kParallel };

struct ExecConfig {
  Exec mode = Exec::kSerial;
  int jobs = 0;  // 0 = runtime default thread count

  static ExecConfig serial() { return {Exec::kSerial, 0}; }
  static ExecConfig parallel(int jobs = 0) { return {Exec::kParallel, jobs}; }
};

template <typename Fn>
void parallel_for(std::int64_t n, const ExecConfig& exec, Fn&& fn) {
  if (exec.mode == Exec::kSerial) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
#ifdef _OPENMP
  if (exec.jobs > 0) {
#pragma omp parallel for schedule(static) num_threads(exec.jobs)
    for (std::int64_t i = 0; i < n; ++i) fn(i);
  } else {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) fn(i);
  }
#else
  for (std::int64_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace ecflow

#endif  // ECFLOW_PARALLEL_HPP_
