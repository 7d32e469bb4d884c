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

// Command-line front end. Flags are folded into a JSON configuration (on top
// of --config, if given) and handed to the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "treespec/treespec.h"

namespace {

using nlohmann::json;

struct Flags {
  std::string config_file;
  std::string mode;
  std::string fast_cache_reorder;
  std::string commit;
  std::size_t M = 0;
  std::size_t dmax = 0;
  std::size_t branch_factor = 0;
  std::string window;
  std::size_t max_new_tokens = 0;
  std::uint64_t seed = 0;
  std::size_t world_size = 0;
  std::size_t prompts = 0;
  std::size_t vocab_subset = 0;
  bool profile = false;
  std::string out_dir;
};

void add_decode_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config_file, "JSON file mirroring these flags")
      ->check(CLI::ExistingFile);
  app->add_option("--mode", f.mode, "verification path")
      ->check(CLI::IsMember({"reference", "performance"}));
  app->add_option("--fast-cache-reorder", f.fast_cache_reorder,
                  "skip the full gather when the accepted path is a prefix")
      ->check(CLI::IsMember({"on", "off"}));
  app->add_option("--commit", f.commit, "cache commit strategy")
      ->check(CLI::IsMember({"length", "path"}));
  app->add_option("--M", f.M, "draft node budget")->check(CLI::PositiveNumber);
  app->add_option("--dmax", f.dmax, "draft depth bound")->check(CLI::PositiveNumber);
  app->add_option("--branch-factor", f.branch_factor, "children per expansion")
      ->check(CLI::PositiveNumber);
  app->add_option("--window", f.window, "drafter context window, or 'none'");
  app->add_option("--max-new-tokens", f.max_new_tokens, "tokens per turn")
      ->check(CLI::PositiveNumber);
  app->add_option("--seed", f.seed, "prompt generator seed");
  app->add_option("--world-size", f.world_size, "number of prompt shards")
      ->check(CLI::PositiveNumber);
  app->add_option("--prompts", f.prompts, "number of prompts")
      ->check(CLI::PositiveNumber);
  app->add_option("--vocab-subset", f.vocab_subset, "drafter head vocabulary size")
      ->check(CLI::PositiveNumber);
  app->add_flag("--profile", f.profile, "record per-stage timings");
  app->add_option("--out-dir", f.out_dir, "output directory");
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CLI::ValidationError("--config", e.what());
  }
}

// Config file first, then every flag given explicitly on the command line.
json build_config(const CLI::App* app, const Flags& f) {
  json j = f.config_file.empty() ? json::object() : load_json(f.config_file);
  auto given = [app](const char* name) { return app->count(name) > 0; };
  if (given("--mode")) j["mode"] = f.mode;
  if (given("--fast-cache-reorder")) j["fast_cache_reorder"] = f.fast_cache_reorder == "on";
  if (given("--commit")) j["commit"] = f.commit;
  if (given("--M")) j["M"] = f.M;
  if (given("--dmax")) j["dmax"] = f.dmax;
  if (given("--branch-factor")) j["branch_factor"] = f.branch_factor;
  if (given("--window")) {
    if (f.window == "none") {
      j["window"] = nullptr;
    } else {
      try {
        j["window"] = std::stoul(f.window);
      } catch (const std::exception&) {
        throw CLI::ValidationError("--window", "expected an integer or 'none'");
      }
    }
  }
  if (given("--max-new-tokens")) j["max_new_tokens"] = f.max_new_tokens;
  if (given("--seed")) j["seed"] = f.seed;
  if (given("--world-size")) j["world_size"] = f.world_size;
  if (given("--prompts")) j["num_prompts"] = f.prompts;
  if (given("--vocab-subset")) j["vocab_subset_size"] = f.vocab_subset;
  if (given("--profile")) j["profile"] = f.profile;
  if (given("--out-dir")) j["out_dir"] = f.out_dir;
  return j;
}

int report(tsd_status status, char* out) {
  if (status != TSD_OK) {
    std::cerr << "error (" << tsd_status_name(status) << "): " << tsd_last_error()
              << "\n";
    return 2 + static_cast<int>(status);
  }
  std::cout << json::parse(out).dump(2) << "\n";
  tsd_string_free(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree speculative decoding on deterministic toy models"};
  app.set_version_flag("--version", tsd_version());
  app.require_subcommand(1);

  Flags run_flags;
  auto* run = app.add_subcommand("run", "decode a prompt set, write traces and summary");
  add_decode_flags(run, run_flags);
  bool baseline_only = false, speculative_only = false;
  run->add_flag("--baseline-only", baseline_only, "skip speculative turns");
  run->add_flag("--speculative-only", speculative_only, "skip baseline turns");

  Flags sweep_flags;
  std::vector<std::string> recipes;
  std::string sweep_spec;
  auto* sweep = app.add_subcommand("sweep", "scan draft settings over one prompt set");
  add_decode_flags(sweep, sweep_flags);
  sweep->add_option("--recipe", recipes, "m-scan, dmax-scan or window-scan")
      ->check(CLI::IsMember({"m-scan", "dmax-scan", "window-scan"}));
  sweep->add_option("--spec", sweep_spec, "JSON file describing the scans")
      ->check(CLI::ExistingFile);

  std::string traces, out_dir = ".";
  auto* summarize = app.add_subcommand("summarize", "aggregate a trace file");
  summarize->add_option("traces", traces, "traces.jsonl")->required()->check(CLI::ExistingFile);
  summarize->add_option("--out-dir", out_dir, "where summary files go");

  auto* breakdown = app.add_subcommand("breakdown", "per-stage latency from profiled traces");
  breakdown->add_option("traces", traces, "traces.jsonl")->required()->check(CLI::ExistingFile);
  breakdown->add_option("--out-dir", out_dir, "where breakdown files go");

  CLI11_PARSE(app, argc, argv);

  try {
    char* out = nullptr;
    if (*run) {
      json cfg = build_config(run, run_flags);
      if (baseline_only) cfg["run_speculative"] = false;
      if (speculative_only) cfg["run_baseline"] = false;
      const tsd_status st = tsd_run(cfg.dump().c_str(), &out);
      return report(st, out);
    }
    if (*sweep) {
      json spec = sweep_spec.empty() ? json{{"scans", json::array()}} : load_json(sweep_spec);
      json base = spec.value("base", json::object());
      base.update(build_config(sweep, sweep_flags));
      spec["base"] = base;
      for (const auto& r : recipes) spec["scans"].push_back({{"recipe", r}});
      if (spec["scans"].empty()) {
        for (const char* r : {"m-scan", "dmax-scan", "window-scan"}) {
          spec["scans"].push_back({{"recipe", r}});
        }
      }
      const tsd_status st = tsd_sweep(spec.dump().c_str(), &out);
      return report(st, out);
    }
    if (*summarize) {
      const tsd_status st = tsd_summarize(traces.c_str(), out_dir.c_str(), &out);
      return report(st, out);
    }
    if (*breakdown) {
      const tsd_status st = tsd_breakdown(traces.c_str(), out_dir.c_str(), &out);
      return report(st, out);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  }
  return 1;
}
