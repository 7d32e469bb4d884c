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

// Exercises the shared library only through its C header.

#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treespec/treespec.h"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ModelDeleter {
  void operator()(tsd_model* m) const { tsd_model_destroy(m); }
};
struct ResultDeleter {
  void operator()(tsd_result* r) const { tsd_result_destroy(r); }
};
using ModelPtr = std::unique_ptr<tsd_model, ModelDeleter>;
using ResultPtr = std::unique_ptr<tsd_result, ResultDeleter>;

ModelPtr make_model(const char* cfg) {
  tsd_model* m = nullptr;
  EXPECT_EQ(tsd_model_create(cfg, &m), TSD_OK) << tsd_last_error();
  return ModelPtr(m);
}

std::vector<int32_t> tokens_of(const tsd_result* r) {
  const int32_t* data = nullptr;
  size_t n = 0;
  EXPECT_EQ(tsd_result_tokens(r, &data, &n), TSD_OK);
  return {data, data + n};
}

json take_json(char* s) {
  json j = json::parse(s);
  tsd_string_free(s);
  return j;
}

TEST(CApi, VersionAndStatusNames) {
  EXPECT_NE(std::string(tsd_version()).find("treespec"), std::string::npos);
  EXPECT_STREQ(tsd_status_name(TSD_OK), "ok");
  EXPECT_STREQ(tsd_status_name(TSD_ERR_STRUCTURE), "structure");
}

TEST(CApi, ModelCreationErrors) {
  tsd_model* m = nullptr;
  EXPECT_EQ(tsd_model_create(R"({"embed_dim": 15})", &m), TSD_ERR_CONFIG);
  EXPECT_EQ(m, nullptr);
  EXPECT_NE(std::string(tsd_last_error()).find("divisible"), std::string::npos);
  EXPECT_EQ(tsd_model_create("{not json", &m), TSD_ERR_CONFIG);
  EXPECT_EQ(tsd_model_create(nullptr, nullptr), TSD_ERR_INVALID_ARGUMENT);

  const ModelPtr ok = make_model(nullptr);
  size_t vocab = 0;
  EXPECT_EQ(tsd_model_vocab_size(ok.get(), &vocab), TSD_OK);
  EXPECT_EQ(vocab, 64u);
}

TEST(CApi, SpeculativeMatchesBaseline) {
  const ModelPtr teacher = make_model("{}");
  const ModelPtr drafter = make_model(R"({"num_layers": 1})");
  const std::vector<int32_t> prompt{4, 9, 16, 25, 36};
  const char* decode = R"({"max_new_tokens": 32, "M": 8})";

  tsd_result* base = nullptr;
  ASSERT_EQ(tsd_generate_baseline(teacher.get(), prompt.data(), prompt.size(), decode, &base),
            TSD_OK);
  const ResultPtr base_ptr(base);
  for (const char* mode : {"reference", "performance"}) {
    const std::string cfg =
        json{{"max_new_tokens", 32}, {"M", 8}, {"mode", mode}}.dump();
    tsd_result* spec = nullptr;
    ASSERT_EQ(tsd_generate_speculative(teacher.get(), drafter.get(), prompt.data(),
                                       prompt.size(), cfg.c_str(), &spec),
              TSD_OK)
        << tsd_last_error();
    const ResultPtr spec_ptr(spec);
    EXPECT_EQ(tokens_of(spec), tokens_of(base));
    const json trace = json::parse(tsd_result_trace_json(spec));
    EXPECT_EQ(trace.at("kind"), "speculative");
    EXPECT_EQ(trace.at("mode"), mode);
  }
  EXPECT_EQ(tokens_of(base).size(), 32u);

  tsd_result* bad = nullptr;
  const std::vector<int32_t> out_of_range{70};
  EXPECT_EQ(tsd_generate_baseline(teacher.get(), out_of_range.data(), 1, nullptr, &bad),
            TSD_ERR_TOKEN_RANGE);
  EXPECT_EQ(bad, nullptr);
}

TEST(CApi, ValidateTree) {
  EXPECT_EQ(tsd_validate_tree(
                R"({"parent":[0,0,1],"depth":[0,1,2],"tokens":[1,2,3],"valid":[true,true,true]})"),
            TSD_OK);
  EXPECT_EQ(tsd_validate_tree(
                R"({"parent":[0,2,1],"depth":[0,1,1],"tokens":[1,2,3],"valid":[true,true,true]})"),
            TSD_ERR_STRUCTURE);
  EXPECT_NE(std::string(tsd_last_error()).find("root"), std::string::npos);
  EXPECT_EQ(tsd_validate_tree("[1,2"), TSD_ERR_FORMAT);
}

TEST(CApi, RunSummarizeBreakdown) {
  const fs::path out = fs::temp_directory_path() / "treespec_capi_run";
  fs::remove_all(out);
  const std::string cfg = json{{"num_prompts", 3},
                               {"max_new_tokens", 16},
                               {"profile", true},
                               {"world_size", 2},
                               {"out_dir", out.string()}}
                              .dump();
  char* text = nullptr;
  ASSERT_EQ(tsd_run(cfg.c_str(), &text), TSD_OK) << tsd_last_error();
  const json result = take_json(text);
  EXPECT_EQ(result.at("turns"), 6);
  EXPECT_EQ(result.at("rank_files").size(), 2u);
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  const std::string traces = result.at("traces").get<std::string>();

  ASSERT_EQ(tsd_summarize(traces.c_str(), out.string().c_str(), &text), TSD_OK);
  const json summary = take_json(text);
  EXPECT_EQ(summary.at("speculative_turns"), 3);

  ASSERT_EQ(tsd_breakdown(traces.c_str(), out.string().c_str(), &text), TSD_OK);
  EXPECT_EQ(take_json(text).size(), 7u);
  EXPECT_TRUE(fs::exists(out / "breakdown.csv"));

  EXPECT_EQ(tsd_summarize((out / "missing.jsonl").string().c_str(), out.string().c_str(), &text),
            TSD_ERR_IO);
  EXPECT_EQ(tsd_run(R"({"world_size": 0})", &text), TSD_ERR_CONFIG);
  EXPECT_EQ(text, nullptr);
  fs::remove_all(out);
}

TEST(CApi, SweepEmptyGridIsAConfigError) {
  char* text = nullptr;
  EXPECT_EQ(tsd_sweep(R"({"scans": []})", &text), TSD_ERR_CONFIG);
  EXPECT_EQ(tsd_sweep(R"({"scans": [{"recipe": "zoom"}]})", &text), TSD_ERR_CONFIG);
}

}  // namespace
