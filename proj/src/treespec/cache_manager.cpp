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

#include "treespec/cache_manager.h"

#include <fmt/format.h>

#include "treespec/common.h"

namespace treespec {

namespace {

void check_length_commit(const CommittedCache& committed,
                         const BranchCache& branch,
                         std::size_t accepted_slots) {
  if (committed.seq_len() != branch.base_len) {
    throw Error(ErrorCode::kCommit,
                fmt::format("branch base length {} differs from committed length {}",
                            branch.base_len, committed.seq_len()));
  }
  if (accepted_slots > branch.extension()) {
    throw Error(ErrorCode::kCommit,
                fmt::format("cannot adopt {} slots from a {}-slot extension",
                            accepted_slots, branch.extension()));
  }
}

void check_path(const BranchCache& branch, std::span<const std::size_t> path) {
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i] >= branch.seq_len()) {
      throw Error(ErrorCode::kCommit,
                  fmt::format("path index {} at position {} outside branch of length {}",
                              path[i], i, branch.seq_len()));
    }
  }
}

}  // namespace

BranchCache replicate(const CommittedCache& committed) {
  return BranchCache{committed.kv, committed.seq_len()};
}

CommittedCache commit_by_length(const CommittedCache& committed,
                                const BranchCache& branch,
                                std::size_t accepted_slots) {
  check_length_commit(committed, branch, accepted_slots);
  CommittedCache out{committed.kv};
  out.kv.reserve(branch.base_len + accepted_slots);
  for (std::size_t i = 0; i < accepted_slots; ++i) {
    out.kv.append_position_from(branch.kv, branch.base_len + i);
  }
  return out;
}

const char* commit_mode_name(CommitMode mode) {
  switch (mode) {
    case CommitMode::kLength: return "length";
    case CommitMode::kPath: return "path";
    case CommitMode::kPathFast: return "path-fast";
  }
  return "unknown";
}

bool is_prefix_preserving(std::span<const std::size_t> path,
                          std::size_t base_len) {
  if (path.size() < base_len) return false;
  for (std::size_t i = 0; i < base_len; ++i) {
    if (path[i] != i) return false;
  }
  return true;
}

PathCommit commit_by_path_indices(CommittedCache committed,
                                  const BranchCache& branch,
                                  std::span<const std::size_t> path,
                                  bool fast_enabled) {
  check_path(branch, path);
  PathCommit result;
  const std::size_t base = branch.base_len;
  const bool shapes_agree = committed.seq_len() == base &&
                            committed.kv.num_layers() == branch.kv.num_layers() &&
                            committed.kv.dim() == branch.kv.dim();
  if (fast_enabled && shapes_agree && is_prefix_preserving(path, base)) {
    result.cache = std::move(committed);
    result.cache.kv.reserve(path.size());
    for (std::size_t i = base; i < path.size(); ++i) {
      result.cache.kv.append_position_from(branch.kv, path[i]);
    }
    result.mode = CommitMode::kPathFast;
    return result;
  }
  KvCache rebuilt(branch.kv.num_layers(), branch.kv.dim());
  rebuilt.reserve(path.size());
  for (std::size_t idx : path) rebuilt.append_position_from(branch.kv, idx);
  result.cache = CommittedCache{std::move(rebuilt)};
  result.mode = CommitMode::kPath;
  result.fallback = fast_enabled;
  return result;
}

std::size_t seq_length(const CommittedCache& cache) { return cache.seq_len(); }
std::size_t seq_length(const BranchCache& cache) { return cache.seq_len(); }

std::vector<LayerTensors> export_layers(const KvCache& cache) {
  std::vector<LayerTensors> out;
  out.reserve(cache.num_layers());
  for (const auto& l : cache.layers()) {
    out.push_back(LayerTensors{l.length(), l.dim, l.keys, l.values});
  }
  return out;
}

KvCache import_layers(std::span<const LayerTensors> layers) {
  if (layers.empty()) return KvCache{};
  const std::size_t rows = layers[0].rows;
  const std::size_t cols = layers[0].cols;
  KvCache cache(layers.size(), cols);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.rows != rows || l.cols != cols) {
      throw Error(ErrorCode::kFormat,
                  fmt::format("layer {} is {}x{}, layer 0 is {}x{}", i, l.rows,
                              l.cols, rows, cols));
    }
    if (l.keys.size() != rows * cols || l.values.size() != rows * cols) {
      throw Error(ErrorCode::kFormat,
                  fmt::format("layer {} data does not match its shape", i));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      cache.append(i, {l.keys.data() + r * cols, cols},
                   {l.values.data() + r * cols, cols});
    }
  }
  return cache;
}

namespace layered {

namespace {

std::vector<LayerTensors> gather_rows(const std::vector<LayerTensors>& src,
                                      std::span<const std::size_t> rows) {
  std::vector<LayerTensors> out;
  for (const auto& l : src) {
    LayerTensors g{rows.size(), l.cols, {}, {}};
    g.keys.reserve(rows.size() * l.cols);
    g.values.reserve(rows.size() * l.cols);
    for (std::size_t r : rows) {
      g.keys.insert(g.keys.end(), l.keys.begin() + r * l.cols,
                    l.keys.begin() + (r + 1) * l.cols);
      g.values.insert(g.values.end(), l.values.begin() + r * l.cols,
                      l.values.begin() + (r + 1) * l.cols);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

CommittedCache commit_by_length(const CommittedCache& committed,
                                const BranchCache& branch,
                                std::size_t accepted_slots) {
  if (seq_length(committed) != branch.base_len ||
      accepted_slots > seq_length(branch) - branch.base_len) {
    throw Error(ErrorCode::kCommit, "length commit out of range");
  }
  auto prefix = export_layers(committed.kv);
  const auto tail_src = export_layers(branch.kv);
  std::vector<std::size_t> tail_rows(accepted_slots);
  for (std::size_t i = 0; i < accepted_slots; ++i) {
    tail_rows[i] = branch.base_len + i;
  }
  const auto tail = gather_rows(tail_src, tail_rows);
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    prefix[i].rows += tail[i].rows;
    prefix[i].keys.insert(prefix[i].keys.end(), tail[i].keys.begin(),
                          tail[i].keys.end());
    prefix[i].values.insert(prefix[i].values.end(), tail[i].values.begin(),
                            tail[i].values.end());
  }
  return CommittedCache{import_layers(prefix)};
}

CommittedCache commit_by_path_indices(const BranchCache& branch,
                                      std::span<const std::size_t> path) {
  for (std::size_t idx : path) {
    if (idx >= seq_length(branch)) {
      throw Error(ErrorCode::kCommit, "path index out of range");
    }
  }
  return CommittedCache{import_layers(gather_rows(export_layers(branch.kv), path))};
}

}  // namespace layered

}  // namespace treespec
