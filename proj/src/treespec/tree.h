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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treespec/common.h"

namespace treespec {

// Linearized speculative tree with a dummy root at index 0. Index k in
// [1, M] is a speculative node; parent[k] is in [0, M] so every gather driven
// by these arrays is in range. tokens[0] carries the pending root token.
struct SpecTree {
  std::vector<std::int32_t> parent{0};
  std::vector<std::int32_t> depth{0};
  TokenSeq tokens{0};
  std::vector<bool> valid{true};

  std::size_t num_nodes() const { return parent.size() - 1; }  // M
  std::size_t num_slots() const { return parent.size(); }      // M + 1
  std::size_t max_depth() const;
  std::size_t valid_nodes() const;

  bool operator==(const SpecTree&) const = default;
};

enum class StructureErrorKind {
  kRange,
  kDepthInconsistency,
  kCycle,
  kValidityClosure,
  kOrdering,
};

const char* structure_error_kind_name(StructureErrorKind kind);

struct StructureIssue {
  StructureErrorKind kind;
  std::size_t node = 0;
  std::string detail;
};

class StructureError : public Error {
 public:
  explicit StructureError(StructureIssue issue);
  const StructureIssue& issue() const { return issue_; }
  StructureErrorKind kind() const { return issue_.kind; }

 private:
  StructureIssue issue_;
};

// One proposed node: parent is 0 for the root or the 1-based index of an
// earlier edge in the same list.
struct TreeEdge {
  std::size_t parent = 0;
  TokenId token = 0;
};

// BFS relabelling (root's children first, level by level, siblings in
// insertion order). Throws StructureError{kOrdering} when an edge references
// a node that has not been seen yet.
SpecTree linearize(std::span<const TreeEdge> edges, TokenId root_token = 0);

// Returns the first violated structural invariant, checked in the order
// shape/range, cycle, depth consistency, validity closure, ordering.
std::optional<StructureIssue> validate_tree(const SpecTree& tree);
void require_valid_tree(const SpecTree& tree);

// table[l][k] = l-th ancestor of k, saturating at the root.
struct AncestorTable {
  std::size_t max_depth = 0;
  std::size_t num_slots = 1;
  std::vector<std::int32_t> table{0};

  std::size_t rows() const { return max_depth + 1; }
  std::int32_t at(std::size_t level, std::size_t node) const {
    return table[level * num_slots + node];
  }
};

// Performs exactly max_depth * (M + 1) parent lookups; the count is added to
// *lookups when given.
AncestorTable build_ancestor_table(const SpecTree& tree,
                                   std::uint64_t* lookups = nullptr);

struct PaddedBatch {
  std::size_t max_nodes = 0;  // M_max
  std::vector<SpecTree> samples;
};

// Pads every tree to M_max + 1 slots with parent=0, depth=0, token=pad_token
// and valid=false.
PaddedBatch pad_batch(std::span<const SpecTree> trees, TokenId pad_token = 0);

// Tokens on the root-to-k path, excluding the root slot.
TokenSeq path_to_node(const SpecTree& tree, std::size_t node);

// Children of each slot in increasing id order.
std::vector<std::vector<std::size_t>> children_lists(const SpecTree& tree);

// Maps every position of the next committed prefix onto a slot of the branch
// cache whose layout is [prefix (t slots) | tree slots 0..M].
using PathIndices = std::vector<std::size_t>;

PathIndices accepted_path_indices(const SpecTree& tree,
                                  std::span<const std::size_t> accepted_chain,
                                  std::size_t prefix_len);

}  // namespace treespec
