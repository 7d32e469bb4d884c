/* Copyright 2026 The treespec Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace treespec {

// Nearest-rank percentile: the value at 1-based rank ceil(p/100 * n) of the
// sorted samples (rank clamped to [1, n]). Throws Error{kConfig} on empty
// input.
double percentile_nearest_rank(std::span<const double> samples, double p);

struct SummaryStats {
  std::size_t count = 0;
  double mean = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
};

SummaryStats summarize_samples(std::span<const double> samples);

// accept_pos[p - 1] = fraction of iterations with accepted length >= p, for
// p = 1 .. max(accepted).
std::vector<double> accept_positions(std::span<const std::size_t> accepted);

}  // namespace treespec
