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

/* C interface to the treespec library. All objects are opaque and owned by the
 * library; release them with the matching *_destroy / tsd_string_free call.
 * Every function returns a tsd_status; on failure tsd_last_error() describes
 * the error for the calling thread until its next failing call. */

#ifndef TREESPEC_TREESPEC_H_
#define TREESPEC_TREESPEC_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TSD_API __declspec(dllexport)
#else
#define TSD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tsd_status {
  TSD_OK = 0,
  TSD_ERR_CONFIG = 1,
  TSD_ERR_TOKEN_RANGE = 2,
  TSD_ERR_SHAPE = 3,
  TSD_ERR_MASK_VALIDITY = 4,
  TSD_ERR_STRUCTURE = 5,
  TSD_ERR_COMMIT = 6,
  TSD_ERR_FORMAT = 7,
  TSD_ERR_IO = 8,
  TSD_ERR_INVARIANT = 9,
  TSD_ERR_INVALID_ARGUMENT = 10,
  TSD_ERR_INTERNAL = 11
} tsd_status;

typedef struct tsd_model tsd_model;
typedef struct tsd_result tsd_result;

TSD_API const char* tsd_version(void);
TSD_API const char* tsd_status_name(tsd_status status);
TSD_API const char* tsd_last_error(void);
TSD_API void tsd_string_free(char* s);

/* Model configuration keys: vocab_size, embed_dim, num_layers, num_heads,
 * ffn_dim, seed, precision ("double" | "single"). NULL or "{}" selects the
 * default teacher. */
TSD_API tsd_status tsd_model_create(const char* config_json, tsd_model** out);
TSD_API void tsd_model_destroy(tsd_model* model);
TSD_API tsd_status tsd_model_vocab_size(const tsd_model* model, size_t* out);

/* decode_json uses the run configuration keys (M, dmax, branch_factor,
 * window, max_new_tokens, mode, commit, fast_cache_reorder, profile,
 * eos_token); NULL selects the defaults. */
TSD_API tsd_status tsd_generate_baseline(const tsd_model* teacher,
                                         const int32_t* prompt,
                                         size_t prompt_len,
                                         const char* decode_json,
                                         tsd_result** out);
TSD_API tsd_status tsd_generate_speculative(const tsd_model* teacher,
                                            const tsd_model* drafter,
                                            const int32_t* prompt,
                                            size_t prompt_len,
                                            const char* decode_json,
                                            tsd_result** out);
TSD_API tsd_status tsd_result_tokens(const tsd_result* result,
                                     const int32_t** tokens, size_t* count);
/* Per-turn trace as a JSON object; valid until the result is destroyed. */
TSD_API const char* tsd_result_trace_json(const tsd_result* result);
TSD_API void tsd_result_destroy(tsd_result* result);

/* Checks a tree given as {"parent": [...], "depth": [...], "tokens": [...],
 * "valid": [...]}. Structural violations return TSD_ERR_STRUCTURE. */
TSD_API tsd_status tsd_validate_tree(const char* tree_json);

/* Batch drivers. Each writes its artifacts below the configured output
 * directory and returns a JSON description in *out_json (free with
 * tsd_string_free). */
TSD_API tsd_status tsd_run(const char* config_json, char** out_json);
TSD_API tsd_status tsd_sweep(const char* sweep_json, char** out_json);
TSD_API tsd_status tsd_summarize(const char* traces_path, const char* out_dir,
                                 char** out_json);
TSD_API tsd_status tsd_breakdown(const char* traces_path, const char* out_dir,
                                 char** out_json);

#ifdef __cplusplus
}
#endif

#endif  // TREESPEC_TREESPEC_H_
