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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "treespec/harness.h"
#include "treespec/stats.h"

namespace treespec {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("treespec_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig small_run(const fs::path& out, std::size_t prompts = 10) {
  RunConfig cfg;
  cfg.num_prompts = prompts;
  cfg.decode.max_new_tokens = 24;
  cfg.out_dir = out;
  return cfg;
}

TEST(Percentiles, NearestRankExample) {
  const std::vector<double> a{3, 3, 6, 8};
  const SummaryStats s = summarize_samples(a);
  EXPECT_EQ(s.count, 4u);
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_EQ(s.p50, 3.0);
  EXPECT_EQ(s.p90, 8.0);
  EXPECT_EQ(s.p99, 8.0);

  const std::vector<double> one{2.5};
  const SummaryStats t = summarize_samples(one);
  EXPECT_EQ(t.mean, 2.5);
  EXPECT_EQ(t.p50, 2.5);
  EXPECT_EQ(t.p99, 2.5);
  EXPECT_EQ(summarize_samples(std::vector<double>{}).count, 0u);
  EXPECT_THROW(percentile_nearest_rank(std::vector<double>{}, 50), Error);
}

TEST(Percentiles, MatchSortOracleAndAreOrdered) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng() % 300);
    for (auto& x : v) x = static_cast<double>(rng() % 1000) / 7.0;
    std::vector<double> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t p : {1u, 50u, 90u, 99u, 100u}) {
      const std::size_t rank = (p * sorted.size() + 99) / 100;  // integer ceiling
      EXPECT_EQ(percentile_nearest_rank(v, static_cast<double>(p)), sorted[rank - 1]);
    }
    const SummaryStats s = summarize_samples(v);
    EXPECT_LE(s.p50, s.p90);
    EXPECT_LE(s.p90, s.p99);
  }
}

TEST(AcceptPositions, Counting) {
  const std::vector<std::size_t> a{2, 0, 1};
  const auto pos = accept_positions(a);
  ASSERT_GE(pos.size(), 2u);
  EXPECT_DOUBLE_EQ(pos[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(pos[1], 1.0 / 3.0);
  const double pos3 = pos.size() > 2 ? pos[2] : 0.0;
  EXPECT_EQ(pos3, 0.0);
}

TEST(Sharding, PartitionLaw) {
  const auto prompts = gen_prompts(3, 240, 2, 4, 64);
  for (std::size_t ws : {1u, 2u, 4u, 8u}) {
    std::multiset<std::int64_t> seen;
    for (std::size_t r = 0; r < ws; ++r) {
      for (const auto& p : shard(prompts, ws, r)) {
        EXPECT_EQ(static_cast<std::size_t>(p.prompt_id) % ws, r);
        seen.insert(p.prompt_id);
      }
    }
    EXPECT_EQ(seen.size(), 240u);
    EXPECT_EQ(std::set<std::int64_t>(seen.begin(), seen.end()).size(), 240u);
  }
  std::vector<Prompt> ids;
  for (std::int64_t i = 0; i < 10; ++i) ids.push_back({i, {1}});
  std::vector<std::int64_t> rank1;
  for (const auto& p : shard(ids, 4, 1)) rank1.push_back(p.prompt_id);
  EXPECT_EQ(rank1, (std::vector<std::int64_t>{1, 5, 9}));
  EXPECT_THROW(shard(ids, 4, 4), Error);
}

TEST(Prompts, SeededAndWithinBounds) {
  const auto a = gen_prompts(9, 30, 8, 32, 64);
  const auto b = gen_prompts(9, 30, 8, 32, 64);
  ASSERT_EQ(a.size(), 30u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tokens, b[i].tokens);
    EXPECT_GE(a[i].tokens.size(), 8u);
    EXPECT_LE(a[i].tokens.size(), 32u);
    for (TokenId t : a[i].tokens) EXPECT_LT(t, 64);
  }
  EXPECT_NE(gen_prompts(10, 30, 8, 32, 64)[0].tokens, a[0].tokens);
}

TEST(Run, PairedTracesAreLossless) {
  const fs::path out = scratch("run");
  RunConfig cfg = small_run(out);
  cfg.world_size = 3;
  const RunResult r = run(cfg);
  ASSERT_EQ(r.traces.size(), 20u);
  EXPECT_EQ(r.rank_files.size(), 3u);
  EXPECT_TRUE(r.failure_dumps.empty());
  for (std::size_t i = 0; i < r.traces.size(); i += 2) {
    const auto& base = r.traces[i];
    const auto& spec = r.traces[i + 1];
    EXPECT_EQ(base.prompt_id, spec.prompt_id);
    EXPECT_EQ(base.kind, "baseline");
    EXPECT_EQ(spec.kind, "speculative");
    EXPECT_EQ(base.output, spec.output);
    EXPECT_FALSE(spec.stages.has_value());
    for (const auto& it : spec.iterations) EXPECT_FALSE(it.stages.has_value());
  }
  // The merged file round-trips and matches the in-memory traces.
  const auto reread = read_traces(r.merged_file);
  ASSERT_EQ(reread.size(), r.traces.size());
  EXPECT_EQ(to_json(reread[3]), to_json(r.traces[3]));

  const auto manifest = nlohmann::json::parse(slurp(r.manifest_file));
  EXPECT_EQ(manifest.at("version"), kVersion);
  EXPECT_EQ(manifest.at("config").at("world_size"), 3);
  EXPECT_EQ(manifest.at("seeds").at("teacher"), 7);
  // The manifest's config reproduces the run configuration.
  EXPECT_EQ(to_json(run_config_from_json(manifest.at("config"))), to_json(cfg));
  fs::remove_all(out);
}

TEST(Run, MergedOutputIndependentOfWorldSize) {
  const fs::path a = scratch("ws1"), b = scratch("ws4");
  RunConfig one = small_run(a, 8), four = small_run(b, 8);
  four.world_size = 4;
  const auto ra = run(one), rb = run(four);
  ASSERT_EQ(ra.traces.size(), rb.traces.size());
  for (std::size_t i = 0; i < ra.traces.size(); ++i) {
    EXPECT_EQ(ra.traces[i].prompt_id, rb.traces[i].prompt_id);
    EXPECT_EQ(ra.traces[i].output, rb.traces[i].output);
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, CorruptedTreeWritesFailureDump) {
  const fs::path out = scratch("failure");
  RunConfig cfg = small_run(out, 3);
  RunHooks hooks;
  hooks.mutate_tree = [](std::int64_t id, SpecTree& t, std::size_t iteration) {
    if (id == 1 && iteration == 1 && t.num_nodes() >= 3) t.parent[3] = 3;
  };
  const RunResult r = run(cfg, &hooks);
  ASSERT_EQ(r.failure_dumps.size(), 1u);
  EXPECT_EQ(r.failure_dumps[0].filename(), "prompt_1_speculative.json");
  const auto dump = nlohmann::json::parse(slurp(r.failure_dumps[0]));
  EXPECT_EQ(dump.at("prompt_id"), 1);
  EXPECT_EQ(dump.at("error").at("code"), "structure");
  EXPECT_EQ(dump.at("iteration"), 1);
  ASSERT_TRUE(dump.at("tree").is_object());
  const SpecTree bad = spec_tree_from_json(dump.at("tree"));
  EXPECT_TRUE(validate_tree(bad).has_value());
  EXPECT_EQ(bad.parent[3], 3);
  // Other turns are unaffected; the failed turn has no trace.
  EXPECT_EQ(r.traces.size(), 5u);
  fs::remove_all(out);
}

TEST(Run, ProfileAddsStagesAndBreakdown) {
  const fs::path out = scratch("profile");
  RunConfig cfg = small_run(out, 4);
  cfg.decode.profile = true;
  const RunResult r = run(cfg);
  for (const auto& t : r.traces) ASSERT_TRUE(t.stages.has_value());
  const auto rows = stage_breakdown(r.traces);
  ASSERT_EQ(rows.size(), 7u);
  for (const auto& row : rows) {
    EXPECT_GT(row.samples, 0u) << row.stage;
    EXPECT_GE(row.p99_ms, 0.0);
    if (row.mean_ms > 0.0) EXPECT_DOUBLE_EQ(row.tail_ratio, row.p99_ms / row.mean_ms);
    EXPECT_GE(row.tail_ratio, 0.0);
  }
  write_breakdown(rows, out);
  EXPECT_TRUE(fs::exists(out / "breakdown.csv"));

  const fs::path plain = scratch("plain");
  const RunResult q = run(small_run(plain, 2));
  EXPECT_THROW(stage_breakdown(q.traces), Error);
  fs::remove_all(out);
  fs::remove_all(plain);
}

TurnTrace fake_trace(std::int64_t id, const std::string& kind, std::vector<std::size_t> a,
                     std::int64_t wall_ns) {
  TurnTrace t;
  t.prompt_id = id;
  t.kind = kind;
  t.wall_ns = wall_ns;
  t.prefill_ns = 1000;
  for (std::size_t x : a) {
    IterationRecord r;
    r.accepted = x;
    t.iterations.push_back(r);
    t.output_len += x + 1;
  }
  if (kind == "baseline") t.output_len = 12;
  return t;
}

TEST(Summary, TokensPerStepAndSpeedup) {
  const std::vector<TurnTrace> traces{
      fake_trace(0, "baseline", {}, 1'000'000),
      fake_trace(0, "speculative", {3, 3, 6, 8}, 500'000),
      fake_trace(1, "speculative", {0}, 500'000)};
  const Summary s = summarize(traces);
  EXPECT_EQ(s.iterations, 5u);
  EXPECT_DOUBLE_EQ(s.tokens_per_teacher_step, 1.0 + 20.0 / 5.0);
  EXPECT_EQ(s.unpaired_prompts, 1u);
  const auto& acc = s.metrics.at("accept_L");
  EXPECT_DOUBLE_EQ(acc.mean, 4.0);
  EXPECT_EQ(acc.p50, 3.0);
  ASSERT_EQ(s.metrics.at("speedup").count, 1u);
  // 24 tokens in 0.5 ms against 12 tokens in 1 ms.
  EXPECT_DOUBLE_EQ(s.metrics.at("speedup").mean, 4.0);
  EXPECT_DOUBLE_EQ(s.accept_pos[0], 4.0 / 5.0);

  const fs::path out = scratch("summary");
  write_summary(s, out);
  const std::string csv = slurp(out / "summary.csv");
  EXPECT_NE(csv.find("nearest-rank"), std::string::npos);
  EXPECT_NE(csv.find("accept_L,5,4,"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  EXPECT_TRUE(fs::exists(out / "accept_pos.csv"));
  fs::remove_all(out);
}

TEST(Sweep, MonotoneTreeSizeAndSharedPrompts) {
  const fs::path out = scratch("sweep");
  SweepSpec spec;
  spec.base = small_run(out, 4);
  spec.scans.push_back({"scan_M", "M", {4, 8, 16}, nlohmann::json{{"dmax", 4}}});
  spec.scans.push_back({"scan_window", "window", {2, 8, std::nullopt}, nlohmann::json::object()});
  const auto rows = sweep(spec);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].prompt_set_hash, rows[0].prompt_set_hash);
    EXPECT_EQ(rows[i].prompts, 4u);
  }
  EXPECT_LE(rows[0].mean_tree_size, rows[1].mean_tree_size);
  EXPECT_LE(rows[1].mean_tree_size, rows[2].mean_tree_size);
  EXPECT_EQ(rows[0].depth_bound, 4u);
  EXPECT_EQ(rows[3].window, std::optional<std::size_t>(2));
  EXPECT_FALSE(rows[5].window.has_value());

  std::ifstream csv(out / "sweep.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 2u + 6u);  // comment, header, one row per setting

  SweepSpec empty;
  empty.base = small_run(out, 2);
  EXPECT_THROW(sweep(empty), Error);
  fs::remove_all(out);
}

TEST(Sweep, RecipesAndSpecParsing) {
  EXPECT_EQ(sweep_recipe("m-scan").values.size(), 5u);
  EXPECT_EQ(sweep_recipe("dmax-scan").fixed.at("M"), 64);
  EXPECT_FALSE(sweep_recipe("window-scan").values.back().has_value());
  EXPECT_THROW(sweep_recipe("nope"), Error);
  const auto spec = sweep_spec_from_json(nlohmann::json::parse(
      R"({"base": {"M": 8, "num_prompts": 3},
          "scans": [{"recipe": "m-scan"}, {"param": "dmax", "values": [2, 3]}]})"));
  EXPECT_EQ(spec.base.decode.draft.node_budget, 8u);
  EXPECT_EQ(spec.base.num_prompts, 3u);
  ASSERT_EQ(spec.scans.size(), 2u);
  EXPECT_EQ(spec.scans[1].name, "scan_dmax");
}

TEST(Config, JsonRoundTripAndValidation) {
  RunConfig cfg;
  cfg.decode.draft.window = 5;
  cfg.decode.mode = ExecutionMode::kReference;
  cfg.decode.commit = CommitStrategy::kLength;
  cfg.vocab_subset_size = 32;
  const auto j = to_json(cfg);
  EXPECT_EQ(to_json(run_config_from_json(j)), j);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"mode", "turbo"}}), Error);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"M", "many"}}), Error);

  RunConfig bad;
  bad.world_size = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = RunConfig{};
  bad.drafter.vocab_size = 32;
  EXPECT_THROW(bad.validate(), Error);

  // Changing the teacher drags along a drafter that was left at its default.
  const RunConfig wider = run_config_from_json(nlohmann::json{{"teacher", {{"embed_dim", 32}}}});
  EXPECT_EQ(wider.drafter.embed_dim, 32u);
  EXPECT_EQ(wider.drafter.num_layers, 1u);
}

TEST(Run, VocabSubsetIsCachedAcrossRuns) {
  const fs::path out = scratch("subset");
  RunConfig cfg = small_run(out, 3);
  cfg.vocab_subset_size = 24;
  const RunResult first = run(cfg);
  const auto manifest = nlohmann::json::parse(slurp(first.manifest_file));
  EXPECT_EQ(manifest.at("vocab_subset").at("size"), 24);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(out / "subset_cache")) {
    EXPECT_EQ(e.path().extension(), ".json");
    ++files;
  }
  EXPECT_EQ(files, 1u);
  for (std::size_t i = 0; i < first.traces.size(); i += 2) {
    EXPECT_EQ(first.traces[i].output, first.traces[i + 1].output);
  }
  fs::remove_all(out);
}

}  // namespace
}  // namespace treespec
