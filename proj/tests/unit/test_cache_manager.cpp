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

#include <numeric>
#include <random>

#include "test_support.h"
#include "treespec/cache_manager.h"

namespace treespec {
namespace {

class CacheManagerTest : public ::testing::Test {
 protected:
  CacheManagerTest() : model_(ModelConfig{}) {}

  CommittedCache committed(std::size_t len) const {
    TokenSeq prompt(len);
    std::iota(prompt.begin(), prompt.end(), 1);
    return CommittedCache{testing::sequential_cache(model_, prompt)};
  }

  void extend(BranchCache& b, TokenSeq tokens) const {
    for (TokenId t : tokens) model_.forward_step(t, b.kv);
  }

  Model model_;
};

TEST_F(CacheManagerTest, ReplicaIsIsolatedFromCommitted) {
  const CommittedCache c = committed(4);
  const CommittedCache snapshot = c;
  BranchCache b = replicate(c);
  EXPECT_EQ(b.base_len, 4u);
  extend(b, {7, 8, 9});
  EXPECT_EQ(c, snapshot);
  EXPECT_EQ(c.seq_len(), 4u);
  EXPECT_EQ(b.extension(), 3u);
}

TEST_F(CacheManagerTest, SiblingReplicasDifferOnlyInExtensions) {
  const CommittedCache c = committed(3);
  BranchCache a = replicate(c), b = replicate(c);
  extend(a, {10, 11});
  extend(b, {20, 21});
  for (std::size_t l = 0; l < c.kv.num_layers(); ++l) {
    for (std::size_t p = 0; p < 3; ++p) {
      EXPECT_TRUE(std::ranges::equal(a.kv.layer(l).key(p), b.kv.layer(l).key(p)));
    }
    EXPECT_FALSE(std::ranges::equal(a.kv.layer(l).key(3), b.kv.layer(l).key(3)));
  }
}

TEST_F(CacheManagerTest, ReplicateEmpty) {
  const CommittedCache empty{model_.make_cache()};
  EXPECT_EQ(replicate(empty).base_len, 0u);
}

TEST_F(CacheManagerTest, CommitByLength) {
  const CommittedCache c = committed(4);
  BranchCache b = replicate(c);
  extend(b, {1, 2, 3, 4, 5, 6});
  const CommittedCache two = commit_by_length(c, b, 2);
  EXPECT_EQ(two.seq_len(), 6u);
  KvCache want = b.kv;
  want.truncate(6);
  EXPECT_EQ(two.kv, want);
  EXPECT_EQ(commit_by_length(c, b, 0), c);
  try {
    commit_by_length(c, b, 7);
    FAIL() << "expected a commit error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCommit);
  }
  const CommittedCache shorter = committed(3);
  EXPECT_THROW(commit_by_length(shorter, b, 1), Error);
}

TEST_F(CacheManagerTest, FastReorderMatchesFullGather) {
  const CommittedCache c = committed(4);
  BranchCache b = replicate(c);
  extend(b, {1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> path{0, 1, 2, 3, 4, 6};
  const PathCommit fast = commit_by_path_indices(c, b, path, true);
  const PathCommit full = commit_by_path_indices(c, b, path, false);
  EXPECT_EQ(fast.mode, CommitMode::kPathFast);
  EXPECT_FALSE(fast.fallback);
  EXPECT_EQ(full.mode, CommitMode::kPath);
  EXPECT_FALSE(full.fallback);
  EXPECT_EQ(fast.cache.seq_len(), 6u);
  EXPECT_EQ(fast.cache, full.cache);
  EXPECT_EQ(fast.cache.kv.checksum(), full.cache.kv.checksum());
}

TEST_F(CacheManagerTest, PurePrefixIsIdentityAndBadIndexFails) {
  const CommittedCache c = committed(4);
  BranchCache b = replicate(c);
  extend(b, {1, 2});
  const std::vector<std::size_t> prefix{0, 1, 2, 3};
  EXPECT_EQ(commit_by_path_indices(c, b, prefix, true).cache, c);
  EXPECT_EQ(commit_by_path_indices(c, b, prefix, false).cache, c);

  const std::vector<std::size_t> bad{0, 1, 9};
  try {
    commit_by_path_indices(c, b, bad, true);
    FAIL() << "expected a commit error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCommit);
  }
}

TEST_F(CacheManagerTest, NonPrefixPathFallsBack) {
  const CommittedCache c = committed(4);
  BranchCache b = replicate(c);
  extend(b, {1, 2, 3});
  const std::vector<std::size_t> swapped{1, 0, 2, 3, 5};
  EXPECT_FALSE(is_prefix_preserving(swapped, 4));
  const PathCommit r = commit_by_path_indices(c, b, swapped, true);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.mode, CommitMode::kPath);
  EXPECT_EQ(r.cache.kv.layer(0).key(0)[0], c.kv.layer(0).key(1)[0]);
  EXPECT_EQ(r.cache.kv.layer(1).value(4)[3], b.kv.layer(1).value(5)[3]);
}

TEST_F(CacheManagerTest, LayeredCommitsMatchDirectOnes) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const CommittedCache c = committed(1 + rng() % 8);
    BranchCache b = replicate(c);
    extend(b, testing::random_tokens(rng, 1 + rng() % 6, 64));
    const std::size_t a = rng() % (b.extension() + 1);
    EXPECT_EQ(layered::commit_by_length(c, b, a), commit_by_length(c, b, a));

    std::vector<std::size_t> path(c.seq_len());
    std::iota(path.begin(), path.end(), 0);
    for (std::size_t i = 0; i < a; ++i) path.push_back(c.seq_len() + rng() % b.extension());
    if (trial % 2 == 1) std::swap(path.front(), path.back());
    EXPECT_EQ(layered::commit_by_path_indices(b, path),
              commit_by_path_indices(c, b, path, true).cache);
  }
}

TEST_F(CacheManagerTest, ExportImportRoundTrip) {
  const CommittedCache c = committed(5);
  const auto layers = export_layers(c.kv);
  ASSERT_EQ(layers.size(), 2u);
  EXPECT_EQ(layers[0].rows, 5u);
  EXPECT_EQ(layers[0].cols, 16u);
  EXPECT_EQ(import_layers(layers), c.kv);
  EXPECT_EQ(seq_length(c), 5u);

  auto ragged = layers;
  ragged[1].rows = 4;
  ragged[1].keys.resize(4 * 16);
  ragged[1].values.resize(4 * 16);
  try {
    import_layers(ragged);
    FAIL() << "expected a format error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFormat);
  }
  auto short_data = layers;
  short_data[0].keys.pop_back();
  EXPECT_THROW(import_layers(short_data), Error);
}

}  // namespace
}  // namespace treespec
