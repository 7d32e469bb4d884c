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

#include "treespec/treespec.h"

#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "treespec/engine.h"
#include "treespec/harness.h"
#include "treespec/toy_model.h"
#include "treespec/tree.h"

using nlohmann::json;

struct tsd_model {
  std::unique_ptr<treespec::Model> model;
};

struct tsd_result {
  treespec::TokenSeq tokens;
  std::string trace_json;
};

namespace {

thread_local std::string g_last_error;

tsd_status to_status(treespec::ErrorCode code) {
  using treespec::ErrorCode;
  switch (code) {
    case ErrorCode::kConfig: return TSD_ERR_CONFIG;
    case ErrorCode::kTokenRange: return TSD_ERR_TOKEN_RANGE;
    case ErrorCode::kShape: return TSD_ERR_SHAPE;
    case ErrorCode::kMaskValidity: return TSD_ERR_MASK_VALIDITY;
    case ErrorCode::kStructure: return TSD_ERR_STRUCTURE;
    case ErrorCode::kCommit: return TSD_ERR_COMMIT;
    case ErrorCode::kFormat: return TSD_ERR_FORMAT;
    case ErrorCode::kIo: return TSD_ERR_IO;
    case ErrorCode::kInvariant: return TSD_ERR_INVARIANT;
  }
  return TSD_ERR_INTERNAL;
}

tsd_status fail(tsd_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
tsd_status guarded(Fn&& fn) {
  try {
    fn();
    return TSD_OK;
  } catch (const treespec::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(TSD_ERR_FORMAT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(TSD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TSD_ERR_INTERNAL, e.what());
  }
}

json parse_or_empty(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw treespec::Error(treespec::ErrorCode::kConfig,
                          std::string("invalid JSON: ") + e.what());
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

tsd_result* make_result(treespec::DecodeResult r) {
  auto* out = new tsd_result;
  out->tokens = std::move(r.tokens);
  out->trace_json = treespec::to_json(r.trace).dump();
  return out;
}

}  // namespace

extern "C" {

const char* tsd_version(void) { return treespec::kVersion; }

const char* tsd_status_name(tsd_status status) {
  switch (status) {
    case TSD_OK: return "ok";
    case TSD_ERR_CONFIG: return "config";
    case TSD_ERR_TOKEN_RANGE: return "token_range";
    case TSD_ERR_SHAPE: return "shape";
    case TSD_ERR_MASK_VALIDITY: return "mask_validity";
    case TSD_ERR_STRUCTURE: return "structure";
    case TSD_ERR_COMMIT: return "commit";
    case TSD_ERR_FORMAT: return "format";
    case TSD_ERR_IO: return "io";
    case TSD_ERR_INVARIANT: return "invariant";
    case TSD_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case TSD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* tsd_last_error(void) { return g_last_error.c_str(); }

void tsd_string_free(char* s) { delete[] s; }

tsd_status tsd_model_create(const char* config_json, tsd_model** out) {
  if (out == nullptr) return fail(TSD_ERR_INVALID_ARGUMENT, "out is null");
  *out = nullptr;
  return guarded([&] {
    const auto cfg = treespec::model_config_from_json(parse_or_empty(config_json),
                                                      treespec::ModelConfig{});
    auto handle = std::make_unique<tsd_model>();
    handle->model = std::make_unique<treespec::Model>(cfg);
    *out = handle.release();
  });
}

void tsd_model_destroy(tsd_model* model) { delete model; }

tsd_status tsd_model_vocab_size(const tsd_model* model, size_t* out) {
  if (model == nullptr || out == nullptr) {
    return fail(TSD_ERR_INVALID_ARGUMENT, "null argument");
  }
  *out = model->model->config().vocab_size;
  return TSD_OK;
}

tsd_status tsd_generate_baseline(const tsd_model* teacher, const int32_t* prompt,
                                 size_t prompt_len, const char* decode_json,
                                 tsd_result** out) {
  if (teacher == nullptr || out == nullptr || (prompt == nullptr && prompt_len > 0)) {
    return fail(TSD_ERR_INVALID_ARGUMENT, "null argument");
  }
  *out = nullptr;
  return guarded([&] {
    const auto cfg = treespec::run_config_from_json(parse_or_empty(decode_json));
    *out = make_result(treespec::generate_baseline(
        *teacher->model, std::span<const int32_t>(prompt, prompt_len), cfg.decode));
  });
}

tsd_status tsd_generate_speculative(const tsd_model* teacher,
                                    const tsd_model* drafter, const int32_t* prompt,
                                    size_t prompt_len, const char* decode_json,
                                    tsd_result** out) {
  if (teacher == nullptr || drafter == nullptr || out == nullptr ||
      (prompt == nullptr && prompt_len > 0)) {
    return fail(TSD_ERR_INVALID_ARGUMENT, "null argument");
  }
  *out = nullptr;
  return guarded([&] {
    const auto cfg = treespec::run_config_from_json(parse_or_empty(decode_json));
    *out = make_result(treespec::generate_speculative(
        *teacher->model, *drafter->model, std::span<const int32_t>(prompt, prompt_len),
        cfg.decode));
  });
}

tsd_status tsd_result_tokens(const tsd_result* result, const int32_t** tokens,
                             size_t* count) {
  if (result == nullptr || tokens == nullptr || count == nullptr) {
    return fail(TSD_ERR_INVALID_ARGUMENT, "null argument");
  }
  *tokens = result->tokens.data();
  *count = result->tokens.size();
  return TSD_OK;
}

const char* tsd_result_trace_json(const tsd_result* result) {
  return result == nullptr ? nullptr : result->trace_json.c_str();
}

void tsd_result_destroy(tsd_result* result) { delete result; }

tsd_status tsd_validate_tree(const char* tree_json) {
  if (tree_json == nullptr) return fail(TSD_ERR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    json j;
    try {
      j = json::parse(tree_json);
    } catch (const json::exception& e) {
      throw treespec::Error(treespec::ErrorCode::kFormat, e.what());
    }
    treespec::require_valid_tree(treespec::spec_tree_from_json(j));
  });
}

tsd_status tsd_run(const char* config_json, char** out_json) {
  if (out_json == nullptr) return fail(TSD_ERR_INVALID_ARGUMENT, "out_json is null");
  *out_json = nullptr;
  return guarded([&] {
    const auto cfg = treespec::run_config_from_json(parse_or_empty(config_json));
    const auto result = treespec::run(cfg);
    json j = {{"traces", result.merged_file.string()},
              {"manifest", result.manifest_file.string()},
              {"turns", result.traces.size()}};
    j["rank_files"] = json::array();
    for (const auto& p : result.rank_files) j["rank_files"].push_back(p.string());
    j["failures"] = json::array();
    for (const auto& p : result.failure_dumps) j["failures"].push_back(p.string());
    if (!result.traces.empty()) {
      const auto summary = treespec::summarize(result.traces);
      treespec::write_summary(summary, cfg.out_dir);
      j["summary"] = treespec::to_json(summary);
    }
    *out_json = dup_string(j.dump());
  });
}

tsd_status tsd_sweep(const char* sweep_json, char** out_json) {
  if (out_json == nullptr) return fail(TSD_ERR_INVALID_ARGUMENT, "out_json is null");
  *out_json = nullptr;
  return guarded([&] {
    const auto spec = treespec::sweep_spec_from_json(parse_or_empty(sweep_json));
    const auto rows = treespec::sweep(spec);
    json j = {{"csv", (spec.base.out_dir / "sweep.csv").string()},
              {"rows", json::array()}};
    for (const auto& r : rows) {
      j["rows"].push_back({{"scan", r.scan},
                           {"param", r.param},
                           {"value", r.value ? json(*r.value) : json(nullptr)},
                           {"mean_tree_size", r.mean_tree_size},
                           {"accept_L_mean", r.accept_len.mean},
                           {"tokens_per_teacher_step", r.tokens_per_teacher_step},
                           {"speedup_mean", r.speedup_mean}});
    }
    *out_json = dup_string(j.dump());
  });
}

tsd_status tsd_summarize(const char* traces_path, const char* out_dir,
                         char** out_json) {
  if (traces_path == nullptr || out_dir == nullptr || out_json == nullptr) {
    return fail(TSD_ERR_INVALID_ARGUMENT, "null argument");
  }
  *out_json = nullptr;
  return guarded([&] {
    const auto summary = treespec::summarize(treespec::read_traces(traces_path));
    treespec::write_summary(summary, out_dir);
    *out_json = dup_string(treespec::to_json(summary).dump());
  });
}

tsd_status tsd_breakdown(const char* traces_path, const char* out_dir,
                         char** out_json) {
  if (traces_path == nullptr || out_dir == nullptr || out_json == nullptr) {
    return fail(TSD_ERR_INVALID_ARGUMENT, "null argument");
  }
  *out_json = nullptr;
  return guarded([&] {
    const auto rows = treespec::stage_breakdown(treespec::read_traces(traces_path));
    treespec::write_breakdown(rows, out_dir);
    json j = json::array();
    for (const auto& r : rows) {
      j.push_back({{"stage", r.stage}, {"samples", r.samples}, {"mean_ms", r.mean_ms},
                   {"p99_ms", r.p99_ms}, {"tail_ratio", r.tail_ratio}});
    }
    *out_json = dup_string(j.dump());
  });
}

}  // extern "C"
