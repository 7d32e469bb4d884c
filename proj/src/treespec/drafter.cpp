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

#include "treespec/drafter.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <fmt/format.h>

namespace treespec {

namespace {

struct FrontierNode {
  double score = 0.0;
  std::size_t edge = 0;  // 0 = root, else 1-based edge index
  std::size_t depth = 0;
  TokenSeq path;
};

struct Candidate {
  TokenId token;
  double log_prob;
};

// Log-softmax over `logits`, then the top-b (value desc, index asc).
std::vector<Candidate> top_candidates(std::span<const double> logits,
                                      std::size_t b, const SubsetMap* subset) {
  std::vector<double> scores;
  if (subset != nullptr) {
    scores.reserve(subset->size());
    for (TokenId t : subset->kept) scores.push_back(logits[t]);
  } else {
    scores.assign(logits.begin(), logits.end());
  }
  const double peak = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - peak);
  const double log_z = peak + std::log(sum);

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t take = std::min(b, order.size());
  std::partial_sort(order.begin(), order.begin() + take, order.end(),
                    [&](std::size_t a, std::size_t c) {
                      return scores[a] != scores[c] ? scores[a] > scores[c] : a < c;
                    });
  std::vector<Candidate> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t idx = order[i];
    const TokenId tok = subset != nullptr ? subset->to_full(idx)
                                          : static_cast<TokenId>(idx);
    out.push_back({tok, scores[idx] - log_z});
  }
  return out;
}

}  // namespace

void DraftConfig::validate() const {
  if (node_budget == 0 || depth_bound == 0 || branch_factor == 0) {
    throw Error(ErrorCode::kConfig,
                "node budget, depth bound and branch factor must be >= 1");
  }
  if (window && *window == 0) {
    throw Error(ErrorCode::kConfig, "drafter window must be >= 1");
  }
}

SpecTree propose_tree(const Model& drafter, std::span<const TokenId> context,
                      const DraftConfig& cfg) {
  cfg.validate();
  if (context.empty()) {
    throw Error(ErrorCode::kShape, "draft context must be non-empty");
  }
  const SubsetMap* subset = cfg.vocab_subset.get();

  KvCache ctx_cache = drafter.make_cache();
  const StepOutput root = drafter.prefill(context, ctx_cache);

  auto node_logits = [&](const FrontierNode& node) -> std::vector<double> {
    if (node.path.empty()) return root.logits;
    KvCache replica = ctx_cache;
    const std::size_t n = node.path.size();
    const std::size_t base = replica.seq_len();
    AttentionMask chain(n, base + n, 0.0);
    std::vector<std::size_t> positions(n);
    for (std::size_t r = 0; r < n; ++r) {
      positions[r] = base + r;
      for (std::size_t c = r + 1; c < n; ++c) chain.at(r, base + c) = kMaskedOut;
    }
    const StepOutput out =
        drafter.forward_masked_batch(node.path, replica, chain, positions);
    const auto last = out.row(n - 1);
    return {last.begin(), last.end()};
  };

  auto better = [](const FrontierNode& a, const FrontierNode& b) {
    return a.score != b.score ? a.score > b.score : a.edge < b.edge;
  };

  std::vector<TreeEdge> edges;
  std::vector<FrontierNode> frontier{FrontierNode{}};
  while (edges.size() < cfg.node_budget && !frontier.empty()) {
    auto best_it = std::min_element(frontier.begin(), frontier.end(), better);
    FrontierNode node = std::move(*best_it);
    frontier.erase(best_it);

    const auto logits = node_logits(node);
    for (const auto& cand : top_candidates(logits, cfg.branch_factor, subset)) {
      if (edges.size() == cfg.node_budget) break;
      edges.push_back(TreeEdge{node.edge, cand.token});
      if (node.depth + 1 < cfg.depth_bound) {
        FrontierNode child;
        child.score = node.score + cand.log_prob;
        child.edge = edges.size();
        child.depth = node.depth + 1;
        child.path = node.path;
        child.path.push_back(cand.token);
        frontier.push_back(std::move(child));
      }
    }
  }
  return linearize(edges);
}

TokenSeq truncate_context(std::span<const TokenId> context,
                          std::optional<std::size_t> window) {
  if (!window || *window >= context.size()) {
    return {context.begin(), context.end()};
  }
  return {context.end() - static_cast<std::ptrdiff_t>(*window), context.end()};
}

SubsetMap build_vocab_subset(std::span<const TokenSeq> corpus,
                             std::size_t subset_size, std::size_t vocab_size) {
  if (subset_size > vocab_size) {
    throw Error(ErrorCode::kConfig,
                fmt::format("subset size {} exceeds vocabulary {}", subset_size,
                            vocab_size));
  }
  if (subset_size == 0) {
    throw Error(ErrorCode::kConfig, "subset size must be >= 1");
  }
  if (corpus.empty()) {
    throw Error(ErrorCode::kConfig, "vocabulary subset needs a non-empty corpus");
  }
  std::vector<std::uint64_t> counts(vocab_size, 0);
  for (const auto& seq : corpus) {
    for (TokenId t : seq) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size) {
        throw Error(ErrorCode::kTokenRange,
                    fmt::format("corpus token {} outside vocabulary", t));
      }
      ++counts[t];
    }
  }
  std::vector<TokenId> order(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) order[i] = static_cast<TokenId>(i);
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return counts[a] > counts[b];
  });
  SubsetMap map;
  map.vocab_size = vocab_size;
  map.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(subset_size));
  std::sort(map.kept.begin(), map.kept.end());
  map.to_subset.assign(vocab_size, -1);
  for (std::size_t i = 0; i < map.kept.size(); ++i) {
    map.to_subset[map.kept[i]] = static_cast<std::int32_t>(i);
  }
  return map;
}

std::vector<double> draft_logits_on_subset(const Model& drafter,
                                           std::span<const TokenId> context,
                                           const SubsetMap& subset) {
  KvCache cache = drafter.make_cache();
  const StepOutput out = drafter.prefill(context, cache);
  std::vector<double> gathered;
  gathered.reserve(subset.size());
  for (TokenId t : subset.kept) gathered.push_back(out.logits[t]);
  return gathered;
}

std::uint64_t corpus_hash(std::span<const TokenSeq> corpus) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  feed(corpus.size());
  for (const auto& seq : corpus) {
    feed(seq.size());
    for (TokenId t : seq) feed(static_cast<std::uint32_t>(t));
  }
  return h;
}

SubsetMap load_or_build_vocab_subset(std::span<const TokenSeq> corpus,
                                     std::size_t subset_size,
                                     std::size_t vocab_size,
                                     const std::filesystem::path& cache_dir,
                                     bool* reused) {
  const std::uint64_t hash = corpus_hash(corpus);
  const auto file =
      cache_dir / fmt::format("vocab_subset_{:016x}_{}.json", hash, subset_size);
  if (std::filesystem::exists(file)) {
    std::ifstream in(file);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat,
                  fmt::format("unreadable subset cache {}: {}", file.string(), e.what()));
    }
    if (j.is_object() &&
        j.value("corpus_hash", std::string()) == fmt::format("{:016x}", hash) &&
        j.value("subset_size", std::size_t{0}) == subset_size &&
        j.value("vocab_size", std::size_t{0}) == vocab_size && j.contains("kept")) {
      SubsetMap map;
      map.vocab_size = vocab_size;
      map.kept = j.at("kept").get<TokenSeq>();
      map.to_subset.assign(vocab_size, -1);
      for (std::size_t i = 0; i < map.kept.size(); ++i) {
        map.to_subset.at(map.kept[i]) = static_cast<std::int32_t>(i);
      }
      if (reused != nullptr) *reused = true;
      return map;
    }
  }
  SubsetMap map = build_vocab_subset(corpus, subset_size, vocab_size);
  std::filesystem::create_directories(cache_dir);
  std::ofstream out(file);
  if (!out) {
    throw Error(ErrorCode::kIo, "cannot write " + file.string());
  }
  out << nlohmann::json{{"corpus_hash", fmt::format("{:016x}", hash)},
                        {"subset_size", subset_size},
                        {"vocab_size", vocab_size},
                        {"kept", map.kept}}
             .dump(2)
      << "\n";
  if (reused != nullptr) *reused = false;
  return map;
}

}  // namespace treespec
