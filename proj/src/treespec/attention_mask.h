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
#include <limits>
#include <vector>

namespace treespec {

// Stand-in for -inf in additive masks: the most negative finite double.
// Added to a score it yields a value whose exp() underflows to exactly 0,
// without the NaNs a real -inf produces in (-inf)*0 products.
inline constexpr double kMaskedOut = std::numeric_limits<double>::lowest();

// Row-major S x (L + S) additive attention mask. Row k governs slot k; the
// first L columns are cached prefix positions and the last S columns are the
// new slots in slot order.
struct AttentionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  AttentionMask() = default;
  AttentionMask(std::size_t r, std::size_t c, double fill)
      : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool allows(std::size_t r, std::size_t c) const {
    return at(r, c) > kMaskedOut;
  }
  std::size_t prefix_len() const { return cols - rows; }

  bool operator==(const AttentionMask&) const = default;
};

}  // namespace treespec
