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

#include "treespec/common.h"

namespace treespec {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "configuration";
    case ErrorCode::kTokenRange: return "token_range";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kMaskValidity: return "mask_validity";
    case ErrorCode::kStructure: return "structure";
    case ErrorCode::kCommit: return "commit";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kInvariant: return "invariant";
  }
  return "unknown";
}

}  // namespace treespec
