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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace treespec {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr const char* kVersion = "treespec 0.3.0";

enum class ErrorCode {
  kConfig,
  kTokenRange,
  kShape,
  kMaskValidity,
  kStructure,
  kCommit,
  kFormat,
  kIo,
  kInvariant,
};

const char* error_code_name(ErrorCode code);

// Base of every exception thrown by the core. The C API maps `code()` onto
// its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Argmax with smallest-index tie-break. Used everywhere a greedy decision is
// taken so that outputs are reproducible across implementations.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace treespec
