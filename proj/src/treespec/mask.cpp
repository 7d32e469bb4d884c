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

#include "treespec/mask.h"

namespace treespec {

AttentionMask build_tree_mask(const SpecTree& tree, const AncestorTable& anc,
                              std::size_t prefix_len) {
  const std::size_t S = tree.num_slots();
  AttentionMask mask(S, prefix_len + S, kMaskedOut);
  for (std::size_t k = 0; k < S; ++k) {
    if (!tree.valid[k]) continue;
    for (std::size_t c = 0; c < prefix_len; ++c) mask.at(k, c) = 0.0;
    const auto d = static_cast<std::size_t>(tree.depth[k]);
    for (std::size_t l = 0; l <= d && l < anc.rows(); ++l) {
      const auto j = static_cast<std::size_t>(anc.at(l, k));
      if (tree.valid[j]) mask.at(k, prefix_len + j) = 0.0;
    }
  }
  return mask;
}

AttentionMask brute_force_mask(const SpecTree& tree, std::size_t prefix_len) {
  const std::size_t S = tree.num_slots();
  AttentionMask mask(S, prefix_len + S, kMaskedOut);
  for (std::size_t k = 0; k < S; ++k) {
    if (!tree.valid[k]) continue;
    for (std::size_t c = 0; c < prefix_len; ++c) mask.at(k, c) = 0.0;
    for (std::size_t j = 0; j < S; ++j) {
      if (!tree.valid[j]) continue;
      std::size_t cur = k;
      bool ancestor = cur == j;
      while (!ancestor && cur != 0) {
        cur = static_cast<std::size_t>(tree.parent[cur]);
        ancestor = cur == j;
      }
      if (ancestor) mask.at(k, prefix_len + j) = 0.0;
    }
  }
  return mask;
}

std::size_t count_visible(const AttentionMask& mask) {
  std::size_t n = 0;
  for (double v : mask.values) n += v == 0.0 ? 1 : 0;
  return n;
}

}  // namespace treespec
