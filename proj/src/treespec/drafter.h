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
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "treespec/common.h"
#include "treespec/toy_model.h"
#include "treespec/tree.h"

namespace treespec {

// Draft vocabulary restricted to the most frequent corpus tokens.
struct SubsetMap {
  std::size_t vocab_size = 0;
  TokenSeq kept;                       // ascending; also the subset->full map
  std::vector<std::int32_t> to_subset; // length vocab_size, -1 when dropped

  std::size_t size() const { return kept.size(); }
  TokenId to_full(std::size_t subset_index) const { return kept[subset_index]; }
  bool operator==(const SubsetMap&) const = default;
};

struct DraftConfig {
  std::size_t node_budget = 16;   // M
  std::size_t depth_bound = 10;   // D_max
  std::size_t branch_factor = 4;  // b
  std::optional<std::size_t> window;
  std::shared_ptr<const SubsetMap> vocab_subset;

  void validate() const;
};

// Best-first expansion by cumulative draft log-probability. The root is the
// last context token; expanding a node adds its top-b draft tokens as
// children (highest first) until node_budget nodes exist or nothing at depth
// < depth_bound is left to expand. Frontier ties go to the older node.
// tokens[0] of the result is left as 0 for the caller to fill.
SpecTree propose_tree(const Model& drafter, std::span<const TokenId> context,
                      const DraftConfig& cfg);

// Last min(|context|, window) tokens.
TokenSeq truncate_context(std::span<const TokenId> context,
                          std::optional<std::size_t> window);

// Keeps the subset_size most frequent tokens, ties to the smaller id.
SubsetMap build_vocab_subset(std::span<const TokenSeq> corpus,
                             std::size_t subset_size, std::size_t vocab_size);

// Draft logits after `context` gathered at the kept token ids.
std::vector<double> draft_logits_on_subset(const Model& drafter,
                                           std::span<const TokenId> context,
                                           const SubsetMap& subset);

std::uint64_t corpus_hash(std::span<const TokenSeq> corpus);

// Reuses <cache_dir>/vocab_subset_<hash>_<size>.json when present, otherwise
// builds the subset and writes that file. *reused reports which happened.
SubsetMap load_or_build_vocab_subset(std::span<const TokenSeq> corpus,
                                     std::size_t subset_size,
                                     std::size_t vocab_size,
                                     const std::filesystem::path& cache_dir,
                                     bool* reused = nullptr);

}  // namespace treespec
