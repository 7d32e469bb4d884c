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

#include "treespec/tree.h"

#include <algorithm>
#include <deque>
#include <fmt/format.h>

namespace treespec {

namespace {

StructureIssue issue(StructureErrorKind kind, std::size_t node,
                     std::string detail) {
  return StructureIssue{kind, node, std::move(detail)};
}

}  // namespace

std::size_t SpecTree::max_depth() const {
  std::int32_t best = 0;
  for (std::size_t k = 0; k < depth.size(); ++k) {
    if (valid[k]) best = std::max(best, depth[k]);
  }
  return static_cast<std::size_t>(best);
}

std::size_t SpecTree::valid_nodes() const {
  std::size_t n = 0;
  for (std::size_t k = 1; k < valid.size(); ++k) n += valid[k] ? 1 : 0;
  return n;
}

const char* structure_error_kind_name(StructureErrorKind kind) {
  switch (kind) {
    case StructureErrorKind::kRange: return "range";
    case StructureErrorKind::kDepthInconsistency: return "depth_inconsistency";
    case StructureErrorKind::kCycle: return "cycle";
    case StructureErrorKind::kValidityClosure: return "validity_closure";
    case StructureErrorKind::kOrdering: return "ordering";
  }
  return "unknown";
}

StructureError::StructureError(StructureIssue issue)
    : Error(ErrorCode::kStructure,
            fmt::format("tree structure error ({}) at node {}: {}",
                        structure_error_kind_name(issue.kind), issue.node,
                        issue.detail)),
      issue_(std::move(issue)) {}

SpecTree linearize(std::span<const TreeEdge> edges, TokenId root_token) {
  const std::size_t n = edges.size();
  std::vector<std::vector<std::size_t>> children(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t self = i + 1;
    if (edges[i].parent >= self) {
      throw StructureError(issue(
          StructureErrorKind::kOrdering, self,
          fmt::format("edge {} references unseen node {}", self, edges[i].parent)));
    }
    children[edges[i].parent].push_back(self);
  }

  SpecTree tree;
  tree.parent.assign(n + 1, 0);
  tree.depth.assign(n + 1, 0);
  tree.tokens.assign(n + 1, 0);
  tree.valid.assign(n + 1, true);
  tree.tokens[0] = root_token;

  std::vector<std::int32_t> new_id(n + 1, 0);
  std::deque<std::size_t> queue{0};
  std::int32_t next = 1;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t c : children[u]) {
      const std::int32_t id = next++;
      new_id[c] = id;
      tree.parent[id] = new_id[u];
      tree.depth[id] = tree.depth[new_id[u]] + 1;
      tree.tokens[id] = edges[c - 1].token;
      queue.push_back(c);
    }
  }
  return tree;
}

std::optional<StructureIssue> validate_tree(const SpecTree& tree) {
  const std::size_t slots = tree.parent.size();
  if (slots == 0 || tree.depth.size() != slots || tree.tokens.size() != slots ||
      tree.valid.size() != slots) {
    return issue(StructureErrorKind::kRange, 0, "array lengths differ");
  }
  const auto M = static_cast<std::int32_t>(slots - 1);
  if (tree.parent[0] != 0) {
    return issue(StructureErrorKind::kRange, 0, "root parent must be 0");
  }
  if (tree.depth[0] != 0) {
    return issue(StructureErrorKind::kDepthInconsistency, 0,
                 "root depth must be 0");
  }
  if (!tree.valid[0]) {
    return issue(StructureErrorKind::kValidityClosure, 0,
                 "root must be valid");
  }
  for (std::size_t k = 1; k < slots; ++k) {
    if (tree.parent[k] < 0 || tree.parent[k] > M) {
      return issue(StructureErrorKind::kRange, k,
                   fmt::format("parent {} outside [0, {}]", tree.parent[k], M));
    }
  }
  for (std::size_t k = 1; k < slots; ++k) {
    if (!tree.valid[k]) continue;
    std::size_t cur = k;
    std::size_t steps = 0;
    while (cur != 0 && steps <= slots) {
      cur = static_cast<std::size_t>(tree.parent[cur]);
      ++steps;
    }
    if (cur != 0) {
      return issue(StructureErrorKind::kCycle, k,
                   "parent chain never reaches the root");
    }
  }
  for (std::size_t k = 1; k < slots; ++k) {
    if (!tree.valid[k]) continue;
    const std::int32_t p = tree.parent[k];
    if (tree.depth[p] != tree.depth[k] - 1) {
      return issue(StructureErrorKind::kDepthInconsistency, k,
                   fmt::format("depth {} but parent {} has depth {}",
                               tree.depth[k], p, tree.depth[p]));
    }
  }
  for (std::size_t k = 1; k < slots; ++k) {
    if (tree.valid[k] && !tree.valid[tree.parent[k]]) {
      return issue(StructureErrorKind::kValidityClosure, k,
                   fmt::format("valid node has invalid parent {}", tree.parent[k]));
    }
  }
  for (std::size_t k = 1; k < slots; ++k) {
    if (static_cast<std::size_t>(tree.parent[k]) >= k) {
      return issue(StructureErrorKind::kOrdering, k,
                   fmt::format("parent {} is not numbered before node", tree.parent[k]));
    }
  }
  return std::nullopt;
}

void require_valid_tree(const SpecTree& tree) {
  if (auto bad = validate_tree(tree)) throw StructureError(*bad);
}

AncestorTable build_ancestor_table(const SpecTree& tree,
                                   std::uint64_t* lookups) {
  AncestorTable anc;
  anc.max_depth = tree.max_depth();
  anc.num_slots = tree.num_slots();
  anc.table.assign(anc.rows() * anc.num_slots, 0);
  for (std::size_t k = 0; k < anc.num_slots; ++k) {
    anc.table[k] = static_cast<std::int32_t>(k);
  }
  std::uint64_t count = 0;
  for (std::size_t l = 1; l < anc.rows(); ++l) {
    const std::int32_t* prev = anc.table.data() + (l - 1) * anc.num_slots;
    std::int32_t* cur = anc.table.data() + l * anc.num_slots;
    for (std::size_t k = 0; k < anc.num_slots; ++k) {
      cur[k] = tree.parent[prev[k]];
      ++count;
    }
  }
  if (lookups != nullptr) *lookups += count;
  return anc;
}

PaddedBatch pad_batch(std::span<const SpecTree> trees, TokenId pad_token) {
  PaddedBatch batch;
  for (const auto& t : trees) {
    batch.max_nodes = std::max(batch.max_nodes, t.num_nodes());
  }
  batch.samples.reserve(trees.size());
  for (const auto& t : trees) {
    SpecTree p = t;
    const std::size_t slots = batch.max_nodes + 1;
    p.parent.resize(slots, 0);
    p.depth.resize(slots, 0);
    p.tokens.resize(slots, pad_token);
    p.valid.resize(slots, false);
    batch.samples.push_back(std::move(p));
  }
  return batch;
}

TokenSeq path_to_node(const SpecTree& tree, std::size_t node) {
  if (node == 0 || node > tree.num_nodes() || !tree.valid[node]) {
    throw StructureError(issue(StructureErrorKind::kRange, node,
                               "not a valid speculative node"));
  }
  TokenSeq path(static_cast<std::size_t>(tree.depth[node]));
  std::size_t cur = node;
  for (std::size_t i = path.size(); i-- > 0;) {
    path[i] = tree.tokens[cur];
    cur = static_cast<std::size_t>(tree.parent[cur]);
  }
  return path;
}

std::vector<std::vector<std::size_t>> children_lists(const SpecTree& tree) {
  std::vector<std::vector<std::size_t>> out(tree.num_slots());
  for (std::size_t k = 1; k < tree.num_slots(); ++k) {
    if (tree.valid[k]) out[tree.parent[k]].push_back(k);
  }
  return out;
}

PathIndices accepted_path_indices(const SpecTree& tree,
                                  std::span<const std::size_t> accepted_chain,
                                  std::size_t prefix_len) {
  std::size_t prev = 0;
  for (std::size_t node : accepted_chain) {
    if (node == 0 || node > tree.num_nodes() || !tree.valid[node] ||
        static_cast<std::size_t>(tree.parent[node]) != prev) {
      throw StructureError(issue(
          StructureErrorKind::kDepthInconsistency, node,
          fmt::format("accepted chain is not root-descending after node {}", prev)));
    }
    prev = node;
  }
  PathIndices indices;
  indices.reserve(prefix_len + 1 + accepted_chain.size());
  for (std::size_t i = 0; i < prefix_len; ++i) indices.push_back(i);
  indices.push_back(prefix_len);
  for (std::size_t node : accepted_chain) indices.push_back(prefix_len + node);
  return indices;
}

}  // namespace treespec
