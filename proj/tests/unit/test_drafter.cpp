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
#include <numeric>
#include <random>

#include "test_support.h"
#include "treespec/drafter.h"

namespace treespec {
namespace {

namespace fs = std::filesystem;

// Log-softmax of the drafter's next-token distribution after `seq`, computed
// with plain sequential steps.
std::vector<double> log_probs_after(const Model& m, const TokenSeq& seq) {
  const auto logits = testing::sequential_logits(m, m.make_cache(), seq);
  const double peak = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - peak);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - peak - std::log(z);
  return out;
}

// Token ids ordered by value descending, smaller id first on ties.
std::vector<TokenId> ranked(const std::vector<double>& v) {
  std::vector<TokenId> ids(v.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) { return v[a] > v[b]; });
  return ids;
}

class DrafterTest : public ::testing::Test {
 protected:
  DrafterTest() : drafter_(ModelConfig{}) {}
  Model drafter_;
  const TokenSeq context_{12, 40, 3, 3, 57, 21, 9};
};

TEST_F(DrafterTest, BudgetOneIsDraftArgmax) {
  for (std::size_t b : {1u, 2u, 5u}) {
    DraftConfig cfg;
    cfg.node_budget = 1;
    cfg.branch_factor = b;
    const SpecTree t = propose_tree(drafter_, context_, cfg);
    ASSERT_EQ(t.num_nodes(), 1u);
    EXPECT_EQ(t.tokens[1], ranked(log_probs_after(drafter_, context_))[0]);
  }
}

TEST_F(DrafterTest, BranchFactorOneIsGreedyRollout) {
  DraftConfig cfg;
  cfg.node_budget = 9;
  cfg.depth_bound = 5;
  cfg.branch_factor = 1;
  const SpecTree t = propose_tree(drafter_, context_, cfg);
  ASSERT_EQ(t.num_nodes(), 5u);  // depth-bounded chain
  TokenSeq seq = context_;
  for (std::size_t k = 1; k <= 5; ++k) {
    EXPECT_EQ(t.parent[k], static_cast<std::int32_t>(k - 1));
    const TokenId next = ranked(log_probs_after(drafter_, seq))[0];
    EXPECT_EQ(t.tokens[k], next) << "depth " << k;
    seq.push_back(next);
  }
}

// M=3, b=2, D=2: the root's top-2 children, then one grandchild under the
// child with the higher log-probability (its top-1 token).
TEST_F(DrafterTest, SmallBudgetExpansionOrder) {
  DraftConfig cfg;
  cfg.node_budget = 3;
  cfg.depth_bound = 2;
  cfg.branch_factor = 2;
  const SpecTree t = propose_tree(drafter_, context_, cfg);

  const auto root_lp = log_probs_after(drafter_, context_);
  const auto top = ranked(root_lp);
  TokenSeq child_ctx = context_;
  child_ctx.push_back(top[0]);
  const TokenId grandchild = ranked(log_probs_after(drafter_, child_ctx))[0];

  EXPECT_EQ(t.parent, (std::vector<std::int32_t>{0, 0, 0, 1}));
  EXPECT_EQ(t.depth, (std::vector<std::int32_t>{0, 1, 1, 2}));
  EXPECT_EQ(t.tokens[1], top[0]);
  EXPECT_EQ(t.tokens[2], top[1]);
  EXPECT_EQ(t.tokens[3], grandchild);
}

TEST_F(DrafterTest, RespectsBudgetDepthAndBranching) {
  std::mt19937_64 rng(8);
  std::size_t previous = 0;
  for (std::size_t m : {1u, 2u, 4u, 8u, 16u, 32u}) {
    DraftConfig cfg;
    cfg.node_budget = m;
    cfg.depth_bound = 3;
    cfg.branch_factor = 3;
    const SpecTree t = propose_tree(drafter_, context_, cfg);
    EXPECT_FALSE(validate_tree(t).has_value());
    EXPECT_LE(t.num_nodes(), m);
    EXPECT_GE(t.num_nodes(), previous);  // larger budget never yields fewer nodes
    EXPECT_LE(t.max_depth(), 3u);
    for (const auto& kids : children_lists(t)) EXPECT_LE(kids.size(), 3u);
    previous = t.num_nodes();
  }
  // Budget exceeds the full 3-ary tree of depth 3 (39 nodes).
  DraftConfig huge;
  huge.node_budget = 100;
  huge.depth_bound = 3;
  huge.branch_factor = 3;
  EXPECT_EQ(propose_tree(drafter_, context_, huge).num_nodes(), 39u);
}

TEST_F(DrafterTest, RejectsBadConfigAndContext) {
  DraftConfig cfg;
  cfg.node_budget = 0;
  EXPECT_THROW(propose_tree(drafter_, context_, cfg), Error);
  cfg = DraftConfig{};
  cfg.window = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(propose_tree(drafter_, TokenSeq{}, DraftConfig{}), Error);
}

TEST(TruncateContext, KeepsTheTail) {
  const TokenSeq ctx{1, 2, 3, 4, 5};
  EXPECT_EQ(truncate_context(ctx, 2), (TokenSeq{4, 5}));
  EXPECT_EQ(truncate_context(ctx, 9), ctx);
  EXPECT_EQ(truncate_context(ctx, std::nullopt), ctx);
}

TEST(VocabSubset, FrequencyWithSmallerIdOnTies) {
  const std::vector<TokenSeq> corpus{{1, 1, 2, 3}};
  const SubsetMap s = build_vocab_subset(corpus, 2, 8);
  EXPECT_EQ(s.kept, (TokenSeq{1, 2}));
  EXPECT_EQ(s.to_subset[1], 0);
  EXPECT_EQ(s.to_subset[2], 1);
  EXPECT_EQ(s.to_subset[3], -1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s.to_subset[s.to_full(i)], static_cast<std::int32_t>(i));
  }
}

TEST(VocabSubset, IdentityAndBounds) {
  const std::vector<TokenSeq> corpus{{0, 5, 5, 7}};
  const SubsetMap full = build_vocab_subset(corpus, 8, 8);
  EXPECT_EQ(full.kept, (TokenSeq{0, 1, 2, 3, 4, 5, 6, 7}));
  try {
    build_vocab_subset(corpus, 9, 8);
    FAIL() << "expected a configuration error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
  EXPECT_THROW(build_vocab_subset({}, 2, 8), Error);
}

TEST(VocabSubset, DraftLogitsAreGatheredAtKeptIds) {
  const Model m{ModelConfig{}};
  const std::vector<TokenSeq> corpus{{4, 4, 9, 9, 9, 30}};
  const SubsetMap s = build_vocab_subset(corpus, 3, 64);
  const TokenSeq ctx{1, 2, 3};
  const auto sub = draft_logits_on_subset(m, ctx, s);
  const auto full = testing::sequential_logits(m, m.make_cache(), ctx);
  ASSERT_EQ(sub.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(sub[i], full[s.kept[i]], 1e-12);

  DraftConfig cfg;
  cfg.node_budget = 8;
  cfg.vocab_subset = std::make_shared<const SubsetMap>(s);
  const SpecTree t = propose_tree(m, ctx, cfg);
  for (std::size_t k = 1; k < t.num_slots(); ++k) {
    EXPECT_NE(s.to_subset[t.tokens[k]], -1) << "token outside the subset";
  }
}

TEST(VocabSubset, CacheFileIsReused) {
  const fs::path dir = fs::temp_directory_path() / "treespec_subset_cache_test";
  fs::remove_all(dir);
  const std::vector<TokenSeq> corpus{{1, 1, 2, 3}, {3, 3, 5}};
  bool reused = true;
  const SubsetMap first = load_or_build_vocab_subset(corpus, 2, 8, dir, &reused);
  EXPECT_FALSE(reused);
  const SubsetMap second = load_or_build_vocab_subset(corpus, 2, 8, dir, &reused);
  EXPECT_TRUE(reused);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first.kept, (TokenSeq{1, 3}));

  const std::vector<TokenSeq> other{{6, 6, 6}};
  load_or_build_vocab_subset(other, 2, 8, dir, &reused);
  EXPECT_FALSE(reused);
  EXPECT_NE(corpus_hash(corpus), corpus_hash(other));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace treespec
