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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treespec/engine.h"
#include "treespec/stats.h"
#include "treespec/toy_model.h"

namespace treespec {

// Everything a run needs; serialized verbatim into the manifest. JSON keys
// mirror the CLI flags (M, dmax, branch_factor, window, max_new_tokens, seed,
// world_size, profile, out_dir, mode, fast_cache_reorder, commit).
struct RunConfig {
  ModelConfig teacher;
  // Defaults to a layer-truncated copy of the teacher (same seed and width,
  // one layer), see default_drafter_config().
  ModelConfig drafter;
  DecodeConfig decode;
  std::uint64_t seed = 1;  // prompt generator seed
  std::size_t num_prompts = 24;
  std::size_t prompt_len_min = 8;
  std::size_t prompt_len_max = 32;
  std::size_t world_size = 1;
  bool run_baseline = true;
  bool run_speculative = true;
  std::filesystem::path out_dir = "treespec_out";
  std::optional<std::size_t> vocab_subset_size;
  std::filesystem::path subset_cache_dir;  // empty: <out_dir>/subset_cache

  RunConfig();
  void validate() const;
};

ModelConfig default_drafter_config(const ModelConfig& teacher);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base);
nlohmann::json to_json(const RunConfig& c);
// Missing keys keep the values already in `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

nlohmann::json to_json(const SpecTree& tree);
SpecTree spec_tree_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StageTimings& t);
nlohmann::json to_json(const TurnTrace& t);
TurnTrace turn_trace_from_json(const nlohmann::json& j);

std::vector<TurnTrace> read_traces(const std::filesystem::path& jsonl);

struct Prompt {
  std::int64_t prompt_id = 0;
  TokenSeq tokens;
};

// Tokens and lengths come from std::mt19937_64(seed): length =
// min_len + draw % (max_len - min_len + 1), token = draw % vocab_size.
std::vector<Prompt> gen_prompts(std::uint64_t seed, std::size_t count,
                                std::size_t min_len, std::size_t max_len,
                                std::size_t vocab_size);

// Prompts with prompt_id % world_size == rank.
std::vector<Prompt> shard(const std::vector<Prompt>& prompts,
                          std::size_t world_size, std::size_t rank);

struct RunHooks {
  std::function<void(std::int64_t prompt_id, SpecTree&, std::size_t iteration)>
      mutate_tree;
};

struct RunResult {
  std::vector<TurnTrace> traces;  // merged, sorted by (prompt_id, kind)
  std::vector<std::filesystem::path> rank_files;
  std::filesystem::path merged_file;
  std::filesystem::path manifest_file;
  std::vector<std::filesystem::path> failure_dumps;
};

// Decodes every prompt of every shard (one worker thread per rank), writes
// traces/rank_<r>.jsonl, the merged traces.jsonl, manifest.json and one
// failures/*.json per aborted turn.
RunResult run(const RunConfig& cfg, const RunHooks* hooks = nullptr);

struct Summary {
  std::map<std::string, SummaryStats> metrics;
  std::vector<double> accept_pos;
  std::size_t iterations = 0;
  std::size_t baseline_turns = 0;
  std::size_t speculative_turns = 0;
  // Hardware-independent headline: emitted tokens per verification forward,
  // i.e. 1 + mean accepted length.
  double tokens_per_teacher_step = 0.0;
  std::size_t unpaired_prompts = 0;
};

Summary summarize(const std::vector<TurnTrace>& traces);
nlohmann::json to_json(const Summary& s);
// summary.json, summary.csv and accept_pos.csv.
void write_summary(const Summary& s, const std::filesystem::path& out_dir);

struct ScanSpec {
  std::string name;
  std::string param;  // "M" | "dmax" | "window" | "branch_factor"
  std::vector<std::optional<std::size_t>> values;  // nullopt: no window
  nlohmann::json fixed = nlohmann::json::object();  // RunConfig overrides
};

struct SweepSpec {
  RunConfig base;
  std::vector<ScanSpec> scans;
};

// Recipes sized for the toy models: "m-scan" (M over 16..256, dmax 10),
// "dmax-scan" (dmax over 4..16, M 64) and "window-scan".
ScanSpec sweep_recipe(const std::string& name);
SweepSpec sweep_spec_from_json(const nlohmann::json& j, RunConfig base = {});

struct SweepRow {
  std::string scan;
  std::string param;
  std::optional<std::size_t> value;
  std::size_t node_budget = 0;
  std::size_t depth_bound = 0;
  std::optional<std::size_t> window;
  std::size_t prompts = 0;
  std::uint64_t prompt_set_hash = 0;
  std::size_t iterations = 0;
  double mean_tree_size = 0.0;
  double mean_depth_used = 0.0;
  SummaryStats accept_len;
  double tokens_per_teacher_step = 0.0;
  double ea_tok_s_mean = 0.0;
  double speedup_mean = 0.0;
};

// One speculative pass per setting over the same prompts; the baseline is
// decoded once and reused for speedups. Writes <out_dir>/sweep.csv.
std::vector<SweepRow> sweep(const SweepSpec& spec);

struct StageRow {
  std::string stage;
  std::size_t samples = 0;
  double mean_ms = 0.0;
  double p99_ms = 0.0;
  double tail_ratio = 0.0;  // p99 / mean
};

// Throws Error{kConfig} when no trace carries stage timings.
std::vector<StageRow> stage_breakdown(const std::vector<TurnTrace>& traces);
void write_breakdown(const std::vector<StageRow>& rows,
                     const std::filesystem::path& out_dir);

}  // namespace treespec
