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

#include "treespec/attention_mask.h"
#include "treespec/tree.h"

namespace treespec {

// S x (L + S) mask with S = M + 1. Slot k may attend to every prefix column
// and to slot j iff j is k or an ancestor of k and both are valid. Invalid
// (pad) slots are fully isolated: their row, prefix columns included, and
// their column inside the speculative block are kMaskedOut.
AttentionMask build_tree_mask(const SpecTree& tree, const AncestorTable& anc,
                              std::size_t prefix_len);

// Same mask computed by walking parent pointers for every (k, j) pair.
AttentionMask brute_force_mask(const SpecTree& tree, std::size_t prefix_len);

// Number of 0 entries; traced as mask metadata.
std::size_t count_visible(const AttentionMask& mask);

}  // namespace treespec
