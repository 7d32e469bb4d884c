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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treespec/cache_manager.h"
#include "treespec/common.h"
#include "treespec/drafter.h"
#include "treespec/toy_model.h"
#include "treespec/tree.h"

namespace treespec {

enum class ExecutionMode { kReference, kPerformance };
enum class CommitStrategy { kLength, kPath };

const char* execution_mode_name(ExecutionMode mode);
ExecutionMode parse_execution_mode(const std::string& name);
const char* commit_strategy_name(CommitStrategy s);
CommitStrategy parse_commit_strategy(const std::string& name);

struct DecodeConfig {
  std::size_t max_new_tokens = 64;
  ExecutionMode mode = ExecutionMode::kPerformance;
  DraftConfig draft;
  std::optional<TokenId> eos_token;
  bool fast_cache_reorder = true;
  CommitStrategy commit = CommitStrategy::kPath;
  // Per-stage timing; perturbs wall-clock numbers, so off by default.
  bool profile = false;

  void validate() const;
};

// Nanoseconds per stage. Iteration records fill draft..commit; the turn
// total also carries prefill.
struct StageTimings {
  std::int64_t draft = 0;
  std::int64_t tensorize = 0;
  std::int64_t mask = 0;
  std::int64_t verify = 0;
  std::int64_t accept = 0;
  std::int64_t commit = 0;
  std::int64_t prefill = 0;

  StageTimings& operator+=(const StageTimings& o);
};

struct IterationRecord {
  std::size_t accepted = 0;  // A (= L_k), before max_new_tokens truncation
  std::size_t tree_size = 0;
  std::size_t depth_used = 0;
  CommitMode commit_mode = CommitMode::kPath;
  bool fast_fallback = false;
  std::optional<StageTimings> stages;
};

struct TurnTrace {
  std::int64_t prompt_id = -1;
  std::string kind;  // "baseline" | "speculative"
  ExecutionMode mode = ExecutionMode::kPerformance;
  std::size_t prompt_len = 0;
  std::size_t output_len = 0;
  TokenSeq output;
  std::vector<IterationRecord> iterations;
  std::vector<std::int64_t> step_ns;  // baseline: one entry per token
  std::int64_t wall_ns = 0;
  std::int64_t prefill_ns = 0;
  std::size_t teacher_forward_count = 0;  // includes the prefill forward
  std::optional<StageTimings> stages;     // totals, profile only

  std::size_t emitted_untruncated() const;
};

struct DecodeResult {
  TokenSeq tokens;
  TurnTrace trace;
};

struct VerifyResult {
  StepOutput logits;            // M + 1 rows, slot 0 = root token
  std::vector<TokenId> argmax;  // per slot, smallest-id tie-break
  BranchCache branch;           // committed prefix + M + 1 slots, tree order
};

struct AcceptOutcome {
  std::vector<std::size_t> chain;  // accepted node ids, root excluded
  std::size_t accepted = 0;        // A
  TokenId bonus = 0;
  TokenSeq emitted;  // path tokens of chain ++ [bonus]
};

// Context attached to any error that aborts a speculative turn.
struct FailureContext {
  std::size_t iteration = 0;
  std::string stage;
  std::optional<SpecTree> tree;
  std::size_t committed_len = 0;
  TokenSeq output_so_far;
  std::optional<StructureIssue> structure;  // set when validation failed
};

class DecodeFailure : public Error {
 public:
  DecodeFailure(const Error& cause, FailureContext ctx)
      : Error(cause.code(), cause.what()), ctx_(std::move(ctx)) {}
  const FailureContext& context() const { return ctx_; }

 private:
  FailureContext ctx_;
};

struct IterationView {
  std::size_t iteration = 0;
  const SpecTree& tree;
  const VerifyResult& verify;
  const AcceptOutcome& accept;
  const CommittedCache& before;  // committed cache the tree was verified on
  const CommittedCache& after;
  const PathIndices& path;       // empty for length commits
  const TokenSeq& output;        // every token emitted so far, untruncated
};

struct DecodeHooks {
  // Runs after the root token is placed and before validation.
  std::function<void(SpecTree&, std::size_t iteration)> mutate_tree;
  std::function<void(const IterationView&)> on_iteration;
};

// Teacher-only greedy decoding: every generated token is fed back with one
// forward_step, so the cache always covers prompt ++ output.
DecodeResult generate_baseline(const Model& teacher,
                               std::span<const TokenId> prompt,
                               const DecodeConfig& cfg);

// One replicate + one tree-masked forward over all M + 1 slots with
// positions prefix_len + depth[k]. Fills tensorize/mask/verify of *timings.
VerifyResult verify_tree_batched(const Model& teacher,
                                 const CommittedCache& committed,
                                 const SpecTree& tree, std::size_t prefix_len,
                                 StageTimings* timings = nullptr);

// Every root-to-node path evaluated by sequential forward_step on replicas
// (depth-first, each node computed once from its parent's replica). The
// branch is reassembled in tree slot order.
VerifyResult verify_tree_reference(const Model& teacher,
                                   const CommittedCache& committed,
                                   const SpecTree& tree,
                                   std::size_t prefix_len,
                                   StageTimings* timings = nullptr);

// Greedy walk from the root: descend into the child whose token equals the
// current slot's teacher argmax (smallest id on duplicates).
AcceptOutcome accept_greedy(const SpecTree& tree, const VerifyResult& verify);

// Draft -> verify -> accept -> commit loop. Each iteration emits the pending
// root token plus the A accepted tokens and carries the bonus token as the
// next root, so one teacher forward is spent per iteration. Any error is
// rethrown as DecodeFailure.
DecodeResult generate_speculative(const Model& teacher, const Model& drafter,
                                  std::span<const TokenId> prompt,
                                  const DecodeConfig& cfg,
                                  const DecodeHooks* hooks = nullptr);

}  // namespace treespec
