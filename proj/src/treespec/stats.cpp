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

#include "treespec/stats.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "treespec/common.h"

namespace treespec {

double percentile_nearest_rank(std::span<const double> samples, double p) {
  if (samples.empty()) {
    throw Error(ErrorCode::kConfig, "percentile of an empty sample");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  // p * n is exact for integral inputs, so whole ranks do not round up.
  auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

SummaryStats summarize_samples(std::span<const double> samples) {
  SummaryStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
           static_cast<double>(samples.size());
  s.p50 = percentile_nearest_rank(samples, 50);
  s.p90 = percentile_nearest_rank(samples, 90);
  s.p99 = percentile_nearest_rank(samples, 99);
  return s;
}

std::vector<double> accept_positions(std::span<const std::size_t> accepted) {
  if (accepted.empty()) return {};
  const std::size_t top = *std::max_element(accepted.begin(), accepted.end());
  std::vector<double> out(top, 0.0);
  for (std::size_t a : accepted) {
    for (std::size_t p = 1; p <= a; ++p) out[p - 1] += 1.0;
  }
  for (double& v : out) v /= static_cast<double>(accepted.size());
  return out;
}

}  // namespace treespec
