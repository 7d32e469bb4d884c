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

#include "treespec/kv_cache.h"

namespace treespec {

// KV state of the accepted prefix. Never written by speculation.
struct CommittedCache {
  KvCache kv;
  std::size_t seq_len() const { return kv.seq_len(); }
  bool operator==(const CommittedCache&) const = default;
};

// Full replica of a committed cache, extended in place by speculative slots.
// Positions below base_len are the replicated prefix.
struct BranchCache {
  KvCache kv;
  std::size_t base_len = 0;
  std::size_t seq_len() const { return kv.seq_len(); }
  std::size_t extension() const { return kv.seq_len() - base_len; }
};

BranchCache replicate(const CommittedCache& committed);

// Keeps committed[0, base_len) and adopts the first accepted_slots new slots
// of the branch. Throws Error{kCommit} when accepted_slots exceeds the
// extension or the branch was not replicated from this committed length.
CommittedCache commit_by_length(const CommittedCache& committed,
                                const BranchCache& branch,
                                std::size_t accepted_slots);

enum class CommitMode { kLength, kPath, kPathFast };
const char* commit_mode_name(CommitMode mode);

struct PathCommit {
  CommittedCache cache;
  CommitMode mode = CommitMode::kPath;
  // Fast reorder was enabled but the path (or cache shapes) did not allow it.
  bool fallback = false;
};

// new[i] = branch[path[i]] for every layer. With fast_enabled and a path
// whose first base_len entries are 0..base_len-1, the committed prefix is kept
// as one contiguous block and only the tail is gathered; otherwise the whole
// cache is rebuilt by gathering. Both routes are bit-identical. Throws
// Error{kCommit} on any out-of-range index.
PathCommit commit_by_path_indices(CommittedCache committed,
                                  const BranchCache& branch,
                                  std::span<const std::size_t> path,
                                  bool fast_enabled);

bool is_prefix_preserving(std::span<const std::size_t> path,
                          std::size_t base_len);

std::size_t seq_length(const CommittedCache& cache);
std::size_t seq_length(const BranchCache& cache);

// Layer-ordered plain matrices (rows = positions, cols = d).
struct LayerTensors {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> keys;
  std::vector<double> values;
  bool operator==(const LayerTensors&) const = default;
};

std::vector<LayerTensors> export_layers(const KvCache& cache);
// Throws Error{kFormat} for ragged layers or mismatched matrix shapes.
KvCache import_layers(std::span<const LayerTensors> layers);

// Commit operations written only against seq_length and the export/import
// interface, used to check that the direct implementations above do not rely
// on anything a different KV layout could not provide.
namespace layered {

CommittedCache commit_by_length(const CommittedCache& committed,
                                const BranchCache& branch,
                                std::size_t accepted_slots);
CommittedCache commit_by_path_indices(const BranchCache& branch,
                                      std::span<const std::size_t> path);

}  // namespace layered

}  // namespace treespec
