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

#include "treespec/harness.h"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace treespec {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kStageNames[] = {"draft",  "tensorize", "mask",   "verify",
                                       "accept", "commit",    "prefill"};

std::int64_t StageTimings::*stage_field(std::size_t i) {
  static constexpr std::int64_t StageTimings::*fields[] = {
      &StageTimings::draft,  &StageTimings::tensorize, &StageTimings::mask,
      &StageTimings::verify, &StageTimings::accept,    &StageTimings::commit,
      &StageTimings::prefill};
  return fields[i];
}

json optional_to_json(const std::optional<std::size_t>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::size_t> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::size_t>();
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

struct FailureRecord {
  std::int64_t prompt_id = 0;
  std::string kind;
  json dump;
};

struct ShardOutput {
  std::vector<TurnTrace> traces;
  std::vector<FailureRecord> failures;
};

json failure_json(const RunConfig& cfg, const Prompt& p, const std::string& kind,
                  const Error& e, const FailureContext* ctx) {
  json j = {{"prompt_id", p.prompt_id},
            {"kind", kind},
            {"mode", execution_mode_name(cfg.decode.mode)},
            {"error", {{"code", error_code_name(e.code())}, {"message", e.what()}}},
            {"prompt", p.tokens},
            {"tree", nullptr},
            {"config", to_json(cfg)}};
  if (ctx != nullptr) {
    j["iteration"] = ctx->iteration;
    j["stage"] = ctx->stage;
    j["committed_len"] = ctx->committed_len;
    j["output_so_far"] = ctx->output_so_far;
    if (ctx->tree) j["tree"] = to_json(*ctx->tree);
    if (ctx->structure) {
      j["error"]["structure_kind"] = structure_error_kind_name(ctx->structure->kind);
      j["error"]["node"] = ctx->structure->node;
      j["error"]["detail"] = ctx->structure->detail;
    }
  }
  return j;
}

ShardOutput decode_shard(const RunConfig& cfg, const DecodeConfig& dc,
                         const Model& teacher, const Model& drafter,
                         const std::vector<Prompt>& prompts, bool baseline,
                         bool speculative, const RunHooks* hooks) {
  ShardOutput out;
  for (const auto& p : prompts) {
    if (baseline) {
      try {
        DecodeResult r = generate_baseline(teacher, p.tokens, dc);
        r.trace.prompt_id = p.prompt_id;
        out.traces.push_back(std::move(r.trace));
      } catch (const Error& e) {
        out.failures.push_back({p.prompt_id, "baseline",
                                failure_json(cfg, p, "baseline", e, nullptr)});
      }
    }
    if (speculative) {
      DecodeHooks dh;
      if (hooks != nullptr && hooks->mutate_tree) {
        dh.mutate_tree = [hooks, id = p.prompt_id](SpecTree& t, std::size_t it) {
          hooks->mutate_tree(id, t, it);
        };
      }
      try {
        DecodeResult r = generate_speculative(teacher, drafter, p.tokens, dc, &dh);
        r.trace.prompt_id = p.prompt_id;
        out.traces.push_back(std::move(r.trace));
      } catch (const DecodeFailure& e) {
        out.failures.push_back({p.prompt_id, "speculative",
                                failure_json(cfg, p, "speculative", e, &e.context())});
      } catch (const Error& e) {
        out.failures.push_back({p.prompt_id, "speculative",
                                failure_json(cfg, p, "speculative", e, nullptr)});
      }
    }
  }
  return out;
}

// One worker thread per rank; results come back indexed by rank.
std::vector<ShardOutput> decode_sharded(const RunConfig& cfg,
                                        const DecodeConfig& dc,
                                        const Model& teacher,
                                        const Model& drafter,
                                        const std::vector<Prompt>& prompts,
                                        bool baseline, bool speculative,
                                        const RunHooks* hooks) {
  std::vector<ShardOutput> outputs(cfg.world_size);
  std::vector<std::exception_ptr> errors(cfg.world_size);
  std::vector<std::thread> workers;
  for (std::size_t rank = 0; rank < cfg.world_size; ++rank) {
    workers.emplace_back([&, rank] {
      try {
        outputs[rank] = decode_shard(cfg, dc, teacher, drafter,
                                     shard(prompts, cfg.world_size, rank),
                                     baseline, speculative, hooks);
      } catch (...) {
        errors[rank] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return outputs;
}

bool trace_order(const TurnTrace& a, const TurnTrace& b) {
  if (a.prompt_id != b.prompt_id) return a.prompt_id < b.prompt_id;
  return a.kind < b.kind;
}

DecodeConfig prepare_decode(const RunConfig& cfg, const Model& teacher,
                            const fs::path& out_dir) {
  DecodeConfig dc = cfg.decode;
  if (!cfg.vocab_subset_size) return dc;
  // Calibration corpus: teacher greedy continuations of a separate prompt set.
  DecodeConfig calib;
  calib.max_new_tokens = 64;
  std::vector<TokenSeq> corpus;
  for (const auto& p : gen_prompts(cfg.seed ^ 0xC0FFEE5EEDULL, 16,
                                   cfg.prompt_len_min, cfg.prompt_len_max,
                                   cfg.teacher.vocab_size)) {
    corpus.push_back(generate_baseline(teacher, p.tokens, calib).tokens);
  }
  const fs::path dir =
      cfg.subset_cache_dir.empty() ? out_dir / "subset_cache" : cfg.subset_cache_dir;
  dc.draft.vocab_subset = std::make_shared<const SubsetMap>(load_or_build_vocab_subset(
      corpus, *cfg.vocab_subset_size, cfg.teacher.vocab_size, dir));
  return dc;
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

double tok_per_s(const TurnTrace& t) {
  return t.wall_ns > 0 ? static_cast<double>(t.output_len) * 1e9 /
                             static_cast<double>(t.wall_ns)
                       : 0.0;
}

std::string fmt_opt(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : std::string("none");
}

}  // namespace

ModelConfig default_drafter_config(const ModelConfig& teacher) {
  ModelConfig d = teacher;
  d.num_layers = 1;
  return d;
}

RunConfig::RunConfig() : drafter(default_drafter_config(teacher)) {}

void RunConfig::validate() const {
  teacher.validate();
  drafter.validate();
  decode.validate();
  if (teacher.vocab_size != drafter.vocab_size) {
    throw Error(ErrorCode::kConfig, "teacher and drafter vocabularies differ");
  }
  if (num_prompts == 0) throw Error(ErrorCode::kConfig, "num_prompts must be >= 1");
  if (prompt_len_min == 0 || prompt_len_max < prompt_len_min) {
    throw Error(ErrorCode::kConfig, "prompt length range must satisfy 1 <= min <= max");
  }
  if (world_size == 0) throw Error(ErrorCode::kConfig, "world_size must be >= 1");
  if (vocab_subset_size &&
      (*vocab_subset_size == 0 || *vocab_subset_size > teacher.vocab_size)) {
    throw Error(ErrorCode::kConfig, "vocab_subset_size must be in [1, vocab_size]");
  }
}

json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
          {"num_layers", c.num_layers}, {"num_heads", c.num_heads},
          {"ffn_dim", c.ffn_dim},       {"seed", c.seed},
          {"precision", precision_name(c.precision)}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig base) {
  read_if(j, "vocab_size", base.vocab_size);
  read_if(j, "embed_dim", base.embed_dim);
  read_if(j, "num_layers", base.num_layers);
  read_if(j, "num_heads", base.num_heads);
  read_if(j, "ffn_dim", base.ffn_dim);
  read_if(j, "seed", base.seed);
  if (j.contains("precision")) {
    base.precision = parse_precision(j.at("precision").get<std::string>());
  }
  return base;
}

json to_json(const RunConfig& c) {
  const auto& d = c.decode;
  json j = {{"teacher", to_json(c.teacher)},
            {"drafter", to_json(c.drafter)},
            {"mode", execution_mode_name(d.mode)},
            {"fast_cache_reorder", d.fast_cache_reorder},
            {"commit", commit_strategy_name(d.commit)},
            {"M", d.draft.node_budget},
            {"dmax", d.draft.depth_bound},
            {"branch_factor", d.draft.branch_factor},
            {"window", optional_to_json(d.draft.window)},
            {"max_new_tokens", d.max_new_tokens},
            {"eos_token", d.eos_token ? json(*d.eos_token) : json(nullptr)},
            {"profile", d.profile},
            {"seed", c.seed},
            {"num_prompts", c.num_prompts},
            {"prompt_len_min", c.prompt_len_min},
            {"prompt_len_max", c.prompt_len_max},
            {"world_size", c.world_size},
            {"run_baseline", c.run_baseline},
            {"run_speculative", c.run_speculative},
            {"out_dir", c.out_dir.string()},
            {"vocab_subset_size", optional_to_json(c.vocab_subset_size)},
            {"subset_cache_dir", c.subset_cache_dir.string()}};
  return j;
}

RunConfig run_config_from_json(const json& j, RunConfig base) {
  try {
    if (j.contains("teacher")) {
      const ModelConfig old_teacher = base.teacher;
      base.teacher = model_config_from_json(j.at("teacher"), base.teacher);
      // A drafter left at its default tracks the teacher it was derived from.
      if (!j.contains("drafter") && base.drafter == default_drafter_config(old_teacher)) {
        base.drafter = default_drafter_config(base.teacher);
      }
    }
    if (j.contains("drafter")) {
      base.drafter = model_config_from_json(j.at("drafter"), base.drafter);
    }
    auto& d = base.decode;
    if (j.contains("mode")) d.mode = parse_execution_mode(j.at("mode").get<std::string>());
    read_if(j, "fast_cache_reorder", d.fast_cache_reorder);
    if (j.contains("commit")) {
      d.commit = parse_commit_strategy(j.at("commit").get<std::string>());
    }
    read_if(j, "M", d.draft.node_budget);
    read_if(j, "dmax", d.draft.depth_bound);
    read_if(j, "branch_factor", d.draft.branch_factor);
    if (j.contains("window")) d.draft.window = optional_from_json(j.at("window"));
    read_if(j, "max_new_tokens", d.max_new_tokens);
    if (j.contains("eos_token")) {
      d.eos_token = j.at("eos_token").is_null()
                        ? std::nullopt
                        : std::optional<TokenId>(j.at("eos_token").get<TokenId>());
    }
    read_if(j, "profile", d.profile);
    read_if(j, "seed", base.seed);
    read_if(j, "num_prompts", base.num_prompts);
    read_if(j, "prompt_len_min", base.prompt_len_min);
    read_if(j, "prompt_len_max", base.prompt_len_max);
    read_if(j, "world_size", base.world_size);
    read_if(j, "run_baseline", base.run_baseline);
    read_if(j, "run_speculative", base.run_speculative);
    if (j.contains("out_dir")) base.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("vocab_subset_size")) {
      base.vocab_subset_size = optional_from_json(j.at("vocab_subset_size"));
    }
    if (j.contains("subset_cache_dir")) {
      base.subset_cache_dir = j.at("subset_cache_dir").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad config: ") + e.what());
  }
  return base;
}

json to_json(const SpecTree& tree) {
  return {{"M", tree.num_nodes()},
          {"parent", tree.parent},
          {"depth", tree.depth},
          {"tokens", tree.tokens},
          {"valid", json(std::vector<bool>(tree.valid.begin(), tree.valid.end()))}};
}

SpecTree spec_tree_from_json(const json& j) {
  SpecTree t;
  t.parent = j.at("parent").get<std::vector<std::int32_t>>();
  t.depth = j.at("depth").get<std::vector<std::int32_t>>();
  t.tokens = j.at("tokens").get<TokenSeq>();
  t.valid = j.at("valid").get<std::vector<bool>>();
  return t;
}

json to_json(const StageTimings& t) {
  json j = json::object();
  for (std::size_t i = 0; i < std::size(kStageNames); ++i) {
    j[kStageNames[i]] = t.*stage_field(i);
  }
  return j;
}

namespace {

StageTimings stage_timings_from_json(const json& j) {
  StageTimings t;
  for (std::size_t i = 0; i < std::size(kStageNames); ++i) {
    read_if(j, kStageNames[i], t.*stage_field(i));
  }
  return t;
}

CommitMode parse_commit_mode(const std::string& s) {
  if (s == "length") return CommitMode::kLength;
  if (s == "path-fast") return CommitMode::kPathFast;
  if (s == "path") return CommitMode::kPath;
  throw Error(ErrorCode::kFormat, "unknown commit mode '" + s + "' in trace");
}

}  // namespace

json to_json(const TurnTrace& t) {
  json its = json::array();
  for (const auto& it : t.iterations) {
    json r = {{"A", it.accepted},
              {"tree_size", it.tree_size},
              {"depth_used", it.depth_used},
              {"commit_mode", commit_mode_name(it.commit_mode)},
              {"fast_fallback", it.fast_fallback}};
    if (it.stages) r["stages"] = to_json(*it.stages);
    its.push_back(std::move(r));
  }
  json j = {{"prompt_id", t.prompt_id},
            {"kind", t.kind},
            {"mode", execution_mode_name(t.mode)},
            {"prompt_len", t.prompt_len},
            {"output_len", t.output_len},
            {"output", t.output},
            {"wall_ns", t.wall_ns},
            {"prefill_ns", t.prefill_ns},
            {"teacher_forward_count", t.teacher_forward_count},
            {"iterations", std::move(its)}};
  if (!t.step_ns.empty()) j["step_ns"] = t.step_ns;
  if (t.stages) j["stages"] = to_json(*t.stages);
  return j;
}

TurnTrace turn_trace_from_json(const json& j) {
  try {
    TurnTrace t;
    t.prompt_id = j.at("prompt_id").get<std::int64_t>();
    t.kind = j.at("kind").get<std::string>();
    t.mode = parse_execution_mode(j.at("mode").get<std::string>());
    t.prompt_len = j.at("prompt_len").get<std::size_t>();
    t.output_len = j.at("output_len").get<std::size_t>();
    t.output = j.at("output").get<TokenSeq>();
    t.wall_ns = j.at("wall_ns").get<std::int64_t>();
    t.prefill_ns = j.at("prefill_ns").get<std::int64_t>();
    t.teacher_forward_count = j.at("teacher_forward_count").get<std::size_t>();
    for (const auto& r : j.at("iterations")) {
      IterationRecord it;
      it.accepted = r.at("A").get<std::size_t>();
      it.tree_size = r.at("tree_size").get<std::size_t>();
      it.depth_used = r.at("depth_used").get<std::size_t>();
      it.commit_mode = parse_commit_mode(r.at("commit_mode").get<std::string>());
      it.fast_fallback = r.at("fast_fallback").get<bool>();
      if (r.contains("stages")) it.stages = stage_timings_from_json(r.at("stages"));
      t.iterations.push_back(it);
    }
    read_if(j, "step_ns", t.step_ns);
    if (j.contains("stages")) t.stages = stage_timings_from_json(j.at("stages"));
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed trace record: ") + e.what());
  }
}

std::vector<TurnTrace> read_traces(const fs::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + jsonl.string());
  std::vector<TurnTrace> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kFormat,
                  fmt::format("{}: invalid JSON line: {}", jsonl.string(), e.what()));
    }
    out.push_back(turn_trace_from_json(j));
  }
  return out;
}

std::vector<Prompt> gen_prompts(std::uint64_t seed, std::size_t count,
                                std::size_t min_len, std::size_t max_len,
                                std::size_t vocab_size) {
  if (count == 0) throw Error(ErrorCode::kConfig, "prompt count must be >= 1");
  if (min_len == 0 || max_len < min_len) {
    throw Error(ErrorCode::kConfig, "prompt lengths must satisfy 1 <= min <= max");
  }
  if (vocab_size == 0) throw Error(ErrorCode::kConfig, "vocab_size must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<Prompt> prompts(count);
  for (std::size_t i = 0; i < count; ++i) {
    prompts[i].prompt_id = static_cast<std::int64_t>(i);
    const std::size_t len = min_len + rng() % (max_len - min_len + 1);
    prompts[i].tokens.resize(len);
    for (auto& t : prompts[i].tokens) t = static_cast<TokenId>(rng() % vocab_size);
  }
  return prompts;
}

std::vector<Prompt> shard(const std::vector<Prompt>& prompts,
                          std::size_t world_size, std::size_t rank) {
  if (world_size == 0 || rank >= world_size) {
    throw Error(ErrorCode::kConfig,
                fmt::format("rank {} outside world of size {}", rank, world_size));
  }
  std::vector<Prompt> out;
  for (const auto& p : prompts) {
    if (static_cast<std::size_t>(p.prompt_id) % world_size == rank) out.push_back(p);
  }
  return out;
}

RunResult run(const RunConfig& cfg, const RunHooks* hooks) {
  cfg.validate();
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "traces");

  const Model teacher(cfg.teacher);
  const Model drafter(cfg.drafter);
  const DecodeConfig dc = prepare_decode(cfg, teacher, out);
  const auto prompts = gen_prompts(cfg.seed, cfg.num_prompts, cfg.prompt_len_min,
                                   cfg.prompt_len_max, cfg.teacher.vocab_size);

  auto shards = decode_sharded(cfg, dc, teacher, drafter, prompts,
                               cfg.run_baseline, cfg.run_speculative, hooks);

  RunResult result;
  for (std::size_t rank = 0; rank < shards.size(); ++rank) {
    const fs::path file = out / "traces" / fmt::format("rank_{}.jsonl", rank);
    std::string text;
    for (const auto& t : shards[rank].traces) text += to_json(t).dump() + "\n";
    write_text(file, text);
    result.rank_files.push_back(file);
    for (const auto& f : shards[rank].failures) {
      fs::create_directories(out / "failures");
      const fs::path dump =
          out / "failures" / fmt::format("prompt_{}_{}.json", f.prompt_id, f.kind);
      write_text(dump, f.dump.dump(2) + "\n");
      result.failure_dumps.push_back(dump);
      spdlog::warn("prompt {} ({}) aborted: {}", f.prompt_id, f.kind,
                   f.dump["error"]["message"].get<std::string>());
    }
  }

  // Rank-0 merge: independent of which worker finished first.
  for (const auto& file : result.rank_files) {
    auto part = read_traces(file);
    std::move(part.begin(), part.end(), std::back_inserter(result.traces));
  }
  std::sort(result.traces.begin(), result.traces.end(), trace_order);
  result.merged_file = out / "traces.jsonl";
  {
    std::string text;
    for (const auto& t : result.traces) text += to_json(t).dump() + "\n";
    write_text(result.merged_file, text);
  }
  std::sort(result.failure_dumps.begin(), result.failure_dumps.end());

  json manifest = {{"version", kVersion},
                   {"timestamp", iso_timestamp()},
                   {"config", to_json(cfg)},
                   {"seeds",
                    {{"prompts", cfg.seed},
                     {"teacher", cfg.teacher.seed},
                     {"drafter", cfg.drafter.seed}}},
                   {"flags",
                    {{"mode", execution_mode_name(cfg.decode.mode)},
                     {"fast_cache_reorder", cfg.decode.fast_cache_reorder},
                     {"commit", commit_strategy_name(cfg.decode.commit)},
                     {"profile", cfg.decode.profile}}},
                   {"percentiles", "nearest-rank"},
                   {"turns", result.traces.size()},
                   {"failures", result.failure_dumps.size()}};
  if (dc.draft.vocab_subset) {
    manifest["vocab_subset"] = {{"size", dc.draft.vocab_subset->size()},
                                {"kept", dc.draft.vocab_subset->kept}};
  }
  result.manifest_file = out / "manifest.json";
  write_text(result.manifest_file, manifest.dump(2) + "\n");
  return result;
}

Summary summarize(const std::vector<TurnTrace>& traces) {
  if (traces.empty()) throw Error(ErrorCode::kConfig, "no traces to summarize");
  Summary s;
  std::vector<double> base_tps, ea_tps, base_tpot, ea_tpot, ttft, accept, tpts;
  std::vector<std::size_t> accepted;
  std::map<std::int64_t, double> base_by_prompt, ea_by_prompt;
  std::size_t emitted = 0;
  for (const auto& t : traces) {
    const double tps = tok_per_s(t);
    const double tpot =
        t.output_len > 0 ? static_cast<double>(t.wall_ns) / 1e6 / static_cast<double>(t.output_len) : 0.0;
    ttft.push_back(static_cast<double>(t.prefill_ns) / 1e6);
    if (t.kind == "baseline") {
      ++s.baseline_turns;
      base_tps.push_back(tps);
      base_tpot.push_back(tpot);
      base_by_prompt[t.prompt_id] = tps;
      continue;
    }
    ++s.speculative_turns;
    ea_tps.push_back(tps);
    ea_tpot.push_back(tpot);
    ea_by_prompt[t.prompt_id] = tps;
    std::size_t turn_emitted = 0;
    for (const auto& it : t.iterations) {
      accepted.push_back(it.accepted);
      accept.push_back(static_cast<double>(it.accepted));
      turn_emitted += it.accepted + 1;
    }
    emitted += turn_emitted;
    if (!t.iterations.empty()) {
      tpts.push_back(static_cast<double>(turn_emitted) /
                     static_cast<double>(t.iterations.size()));
    }
  }
  std::vector<double> speedup;
  for (const auto& [id, ea] : ea_by_prompt) {
    const auto it = base_by_prompt.find(id);
    if (it == base_by_prompt.end() || it->second <= 0.0) {
      ++s.unpaired_prompts;
      continue;
    }
    speedup.push_back(ea / it->second);
  }
  if (s.unpaired_prompts > 0 && s.baseline_turns > 0) {
    spdlog::warn("{} speculative turns have no baseline pair; speedup omitted for them",
                 s.unpaired_prompts);
  }
  s.iterations = accepted.size();
  s.accept_pos = accept_positions(accepted);
  if (!accepted.empty()) {
    s.tokens_per_teacher_step =
        static_cast<double>(emitted) / static_cast<double>(accepted.size());
  }
  auto put = [&s](const char* name, const std::vector<double>& v) {
    if (!v.empty()) s.metrics[name] = summarize_samples(v);
  };
  put("baseline_tok_s", base_tps);
  put("ea_tok_s", ea_tps);
  put("speedup", speedup);
  put("accept_L", accept);
  put("tokens_per_teacher_step", tpts);
  put("baseline_tpot_ms", base_tpot);
  put("ea_tpot_ms", ea_tpot);
  put("ttft_ms", ttft);
  return s;
}

json to_json(const Summary& s) {
  json metrics = json::object();
  for (const auto& [name, st] : s.metrics) {
    metrics[name] = {{"count", st.count}, {"mean", st.mean}, {"p50", st.p50},
                     {"p90", st.p90},     {"p99", st.p99}};
  }
  return {{"percentiles", "nearest-rank"},
          {"metrics", metrics},
          {"accept_pos", s.accept_pos},
          {"iterations", s.iterations},
          {"baseline_turns", s.baseline_turns},
          {"speculative_turns", s.speculative_turns},
          {"tokens_per_teacher_step", s.tokens_per_teacher_step},
          {"unpaired_prompts", s.unpaired_prompts}};
}

void write_summary(const Summary& s, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "summary.json", to_json(s).dump(2) + "\n");
  std::string csv = "# percentiles: nearest-rank\nmetric,count,mean,p50,p90,p99\n";
  for (const auto& [name, st] : s.metrics) {
    csv += fmt::format("{},{},{:.6g},{:.6g},{:.6g},{:.6g}\n", name, st.count, st.mean,
                       st.p50, st.p90, st.p99);
  }
  write_text(out_dir / "summary.csv", csv);
  std::string pos = "position,fraction\n";
  for (std::size_t p = 0; p < s.accept_pos.size(); ++p) {
    pos += fmt::format("{},{:.6g}\n", p + 1, s.accept_pos[p]);
  }
  write_text(out_dir / "accept_pos.csv", pos);
}

ScanSpec sweep_recipe(const std::string& name) {
  if (name == "m-scan") {
    return {"scan_M", "M", {16, 32, 64, 128, 256}, json{{"dmax", 10}}};
  }
  if (name == "dmax-scan") {
    return {"scan_dmax", "dmax", {4, 8, 10, 12, 16}, json{{"M", 64}}};
  }
  if (name == "window-scan") {
    return {"scan_window", "window", {2, 8, 32, std::nullopt}, json::object()};
  }
  throw Error(ErrorCode::kConfig, "unknown sweep recipe '" + name + "'");
}

SweepSpec sweep_spec_from_json(const json& j, RunConfig base) {
  SweepSpec spec;
  try {
    spec.base = j.contains("base") ? run_config_from_json(j.at("base"), base) : base;
    for (const auto& s : j.at("scans")) {
      if (s.contains("recipe")) {
        spec.scans.push_back(sweep_recipe(s.at("recipe").get<std::string>()));
        continue;
      }
      ScanSpec scan;
      scan.param = s.at("param").get<std::string>();
      scan.name = s.value("name", "scan_" + scan.param);
      for (const auto& v : s.at("values")) scan.values.push_back(optional_from_json(v));
      if (s.contains("fixed")) scan.fixed = s.at("fixed");
      spec.scans.push_back(std::move(scan));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad sweep spec: ") + e.what());
  }
  return spec;
}

std::vector<SweepRow> sweep(const SweepSpec& spec) {
  std::size_t settings = 0;
  for (const auto& s : spec.scans) settings += s.values.size();
  if (settings == 0) throw Error(ErrorCode::kConfig, "sweep grid is empty");
  spec.base.validate();

  const RunConfig& base = spec.base;
  const Model teacher(base.teacher);
  const Model drafter(base.drafter);
  const auto prompts = gen_prompts(base.seed, base.num_prompts, base.prompt_len_min,
                                   base.prompt_len_max, base.teacher.vocab_size);
  std::vector<TokenSeq> prompt_tokens;
  for (const auto& p : prompts) prompt_tokens.push_back(p.tokens);
  const std::uint64_t prompt_hash = corpus_hash(prompt_tokens);

  std::vector<TurnTrace> baseline;
  if (base.run_baseline) {
    for (auto& sh : decode_sharded(base, base.decode, teacher, drafter, prompts, true,
                                   false, nullptr)) {
      std::move(sh.traces.begin(), sh.traces.end(), std::back_inserter(baseline));
    }
  }

  std::vector<SweepRow> rows;
  for (const auto& scan : spec.scans) {
    for (const auto& value : scan.values) {
      RunConfig cfg = run_config_from_json(scan.fixed, base);
      auto& draft = cfg.decode.draft;
      if (scan.param == "M") {
        draft.node_budget = value.value_or(draft.node_budget);
      } else if (scan.param == "dmax") {
        draft.depth_bound = value.value_or(draft.depth_bound);
      } else if (scan.param == "branch_factor") {
        draft.branch_factor = value.value_or(draft.branch_factor);
      } else if (scan.param == "window") {
        draft.window = value;
      } else {
        throw Error(ErrorCode::kConfig, "cannot sweep parameter '" + scan.param + "'");
      }
      cfg.validate();
      const DecodeConfig dc = prepare_decode(cfg, teacher, cfg.out_dir);
      std::vector<TurnTrace> traces = baseline;
      std::size_t failures = 0;
      for (auto& sh : decode_sharded(cfg, dc, teacher, drafter, prompts, false, true,
                                     nullptr)) {
        failures += sh.failures.size();
        std::move(sh.traces.begin(), sh.traces.end(), std::back_inserter(traces));
      }
      if (failures > 0) {
        spdlog::warn("{} {}={}: {} turns aborted", scan.name, scan.param,
                     fmt_opt(value), failures);
      }
      const Summary sum = summarize(traces);

      SweepRow row;
      row.scan = scan.name;
      row.param = scan.param;
      row.value = value;
      row.node_budget = draft.node_budget;
      row.depth_bound = draft.depth_bound;
      row.window = draft.window;
      row.prompts = prompts.size();
      row.prompt_set_hash = prompt_hash;
      row.iterations = sum.iterations;
      double size_total = 0.0, depth_total = 0.0;
      for (const auto& t : traces) {
        for (const auto& it : t.iterations) {
          size_total += static_cast<double>(it.tree_size);
          depth_total += static_cast<double>(it.depth_used);
        }
      }
      if (sum.iterations > 0) {
        row.mean_tree_size = size_total / static_cast<double>(sum.iterations);
        row.mean_depth_used = depth_total / static_cast<double>(sum.iterations);
      }
      if (sum.metrics.count("accept_L")) row.accept_len = sum.metrics.at("accept_L");
      row.tokens_per_teacher_step = sum.tokens_per_teacher_step;
      if (sum.metrics.count("ea_tok_s")) row.ea_tok_s_mean = sum.metrics.at("ea_tok_s").mean;
      if (sum.metrics.count("speedup")) row.speedup_mean = sum.metrics.at("speedup").mean;
      rows.push_back(row);
    }
  }

  fs::create_directories(base.out_dir);
  std::string csv =
      "# percentiles: nearest-rank\n"
      "scan,param,value,M,dmax,window,prompts,prompt_set_hash,iterations,"
      "mean_tree_size,mean_depth_used,accept_L_mean,accept_L_p50,accept_L_p90,"
      "accept_L_p99,tokens_per_teacher_step,ea_tok_s_mean,speedup_mean\n";
  for (const auto& r : rows) {
    csv += fmt::format(
        "{},{},{},{},{},{},{},{:016x},{},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},{:.6g},"
        "{:.6g},{:.6g},{:.6g}\n",
        r.scan, r.param, fmt_opt(r.value), r.node_budget, r.depth_bound,
        fmt_opt(r.window), r.prompts, r.prompt_set_hash, r.iterations,
        r.mean_tree_size, r.mean_depth_used, r.accept_len.mean, r.accept_len.p50,
        r.accept_len.p90, r.accept_len.p99, r.tokens_per_teacher_step,
        r.ea_tok_s_mean, r.speedup_mean);
  }
  write_text(base.out_dir / "sweep.csv", csv);
  return rows;
}

std::vector<StageRow> stage_breakdown(const std::vector<TurnTrace>& traces) {
  std::vector<std::vector<double>> samples(std::size(kStageNames));
  bool any = false;
  for (const auto& t : traces) {
    if (t.stages) {
      any = true;
      samples[6].push_back(static_cast<double>(t.stages->prefill) / 1e6);
    }
    for (const auto& it : t.iterations) {
      if (!it.stages) continue;
      any = true;
      for (std::size_t i = 0; i < 6; ++i) {
        samples[i].push_back(static_cast<double>(it.stages.value().*stage_field(i)) / 1e6);
      }
    }
  }
  if (!any) {
    throw Error(ErrorCode::kConfig,
                "traces carry no stage timings; record them with --profile");
  }
  std::vector<StageRow> rows;
  for (std::size_t i = 0; i < std::size(kStageNames); ++i) {
    StageRow r;
    r.stage = kStageNames[i];
    r.samples = samples[i].size();
    if (!samples[i].empty()) {
      const SummaryStats st = summarize_samples(samples[i]);
      r.mean_ms = st.mean;
      r.p99_ms = st.p99;
      r.tail_ratio = st.mean > 0.0 ? st.p99 / st.mean : 1.0;
    }
    rows.push_back(r);
  }
  return rows;
}

void write_breakdown(const std::vector<StageRow>& rows, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::string csv = "# percentiles: nearest-rank\nstage,samples,mean_ms,p99_ms,tail_ratio\n";
  json j = json::array();
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{:.6g},{:.6g},{:.6g}\n", r.stage, r.samples, r.mean_ms,
                       r.p99_ms, r.tail_ratio);
    j.push_back({{"stage", r.stage}, {"samples", r.samples}, {"mean_ms", r.mean_ms},
                 {"p99_ms", r.p99_ms}, {"tail_ratio", r.tail_ratio}});
  }
  write_text(out_dir / "breakdown.csv", csv);
  write_text(out_dir / "breakdown.json", j.dump(2) + "\n");
}

}  // namespace treespec
