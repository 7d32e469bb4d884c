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

#include "treespec/engine.h"

#include <algorithm>
#include <chrono>
#include <fmt/format.h>

#include "treespec/mask.h"

namespace treespec {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point since) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - since)
      .count();
}

// Adds the elapsed time to *slot on destruction when slot is non-null.
class StageTimer {
 public:
  explicit StageTimer(std::int64_t* slot) : slot_(slot) {
    if (slot_ != nullptr) start_ = Clock::now();
  }
  ~StageTimer() {
    if (slot_ != nullptr) *slot_ += elapsed_ns(start_);
  }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  std::int64_t* slot_;
  Clock::time_point start_;
};

std::int64_t* stage(StageTimings* t, std::int64_t StageTimings::*field) {
  return t == nullptr ? nullptr : &(t->*field);
}

std::vector<TokenId> slot_argmax(const StepOutput& out) {
  std::vector<TokenId> best(out.slots());
  for (std::size_t s = 0; s < out.slots(); ++s) {
    best[s] = static_cast<TokenId>(argmax(out.row(s)));
  }
  return best;
}

void check_prefix(const CommittedCache& committed, std::size_t prefix_len) {
  if (committed.seq_len() != prefix_len) {
    throw Error(ErrorCode::kShape,
                fmt::format("prefix length {} differs from committed length {}",
                            prefix_len, committed.seq_len()));
  }
}

}  // namespace

const char* execution_mode_name(ExecutionMode mode) {
  return mode == ExecutionMode::kReference ? "reference" : "performance";
}

ExecutionMode parse_execution_mode(const std::string& name) {
  if (name == "reference") return ExecutionMode::kReference;
  if (name == "performance") return ExecutionMode::kPerformance;
  throw Error(ErrorCode::kConfig, "unknown mode '" + name + "'");
}

const char* commit_strategy_name(CommitStrategy s) {
  return s == CommitStrategy::kLength ? "length" : "path";
}

CommitStrategy parse_commit_strategy(const std::string& name) {
  if (name == "length") return CommitStrategy::kLength;
  if (name == "path") return CommitStrategy::kPath;
  throw Error(ErrorCode::kConfig, "unknown commit mode '" + name + "'");
}

void DecodeConfig::validate() const {
  if (max_new_tokens == 0) {
    throw Error(ErrorCode::kConfig, "max_new_tokens must be >= 1");
  }
  draft.validate();
}

StageTimings& StageTimings::operator+=(const StageTimings& o) {
  draft += o.draft;
  tensorize += o.tensorize;
  mask += o.mask;
  verify += o.verify;
  accept += o.accept;
  commit += o.commit;
  prefill += o.prefill;
  return *this;
}

std::size_t TurnTrace::emitted_untruncated() const {
  if (kind == "baseline") return output_len;
  std::size_t n = 0;
  for (const auto& it : iterations) n += it.accepted + 1;
  return n;
}

DecodeResult generate_baseline(const Model& teacher,
                               std::span<const TokenId> prompt,
                               const DecodeConfig& cfg) {
  cfg.validate();
  DecodeResult result;
  TurnTrace& trace = result.trace;
  trace.kind = "baseline";
  trace.mode = cfg.mode;
  trace.prompt_len = prompt.size();

  const auto wall_start = Clock::now();
  KvCache cache = teacher.make_cache();
  StepOutput out = teacher.prefill(prompt, cache);
  trace.prefill_ns = elapsed_ns(wall_start);
  trace.teacher_forward_count = 1;

  while (true) {
    const auto step_start = Clock::now();
    const auto token = static_cast<TokenId>(argmax(out.row(0)));
    result.tokens.push_back(token);
    out = teacher.forward_step(token, cache);
    ++trace.teacher_forward_count;
    trace.step_ns.push_back(elapsed_ns(step_start));
    if (result.tokens.size() >= cfg.max_new_tokens ||
        (cfg.eos_token && token == *cfg.eos_token)) {
      break;
    }
  }
  trace.wall_ns = elapsed_ns(wall_start);
  if (cfg.profile) {
    trace.stages = StageTimings{};
    trace.stages->prefill = trace.prefill_ns;
  }
  trace.output = result.tokens;
  trace.output_len = result.tokens.size();
  return result;
}

VerifyResult verify_tree_batched(const Model& teacher,
                                 const CommittedCache& committed,
                                 const SpecTree& tree, std::size_t prefix_len,
                                 StageTimings* timings) {
  check_prefix(committed, prefix_len);
  AncestorTable anc;
  std::vector<std::size_t> positions(tree.num_slots());
  {
    StageTimer t(stage(timings, &StageTimings::tensorize));
    anc = build_ancestor_table(tree);
    for (std::size_t k = 0; k < positions.size(); ++k) {
      positions[k] = prefix_len + static_cast<std::size_t>(tree.depth[k]);
    }
  }
  AttentionMask mask;
  {
    StageTimer t(stage(timings, &StageTimings::mask));
    mask = build_tree_mask(tree, anc, prefix_len);
  }
  StageTimer t(stage(timings, &StageTimings::verify));
  VerifyResult result{StepOutput{}, {}, replicate(committed)};
  result.logits =
      teacher.forward_masked_batch(tree.tokens, result.branch.kv, mask, positions);
  result.argmax = slot_argmax(result.logits);
  return result;
}

VerifyResult verify_tree_reference(const Model& teacher,
                                   const CommittedCache& committed,
                                   const SpecTree& tree,
                                   std::size_t prefix_len,
                                   StageTimings* timings) {
  check_prefix(committed, prefix_len);
  const std::size_t slots = tree.num_slots();
  std::vector<std::vector<std::size_t>> kids;
  {
    StageTimer t(stage(timings, &StageTimings::tensorize));
    kids = children_lists(tree);
  }
  StageTimer t(stage(timings, &StageTimings::verify));

  VerifyResult result;
  result.logits.vocab = teacher.vocab_size();
  result.logits.logits.resize(slots * teacher.vocab_size());
  std::vector<KvCache> slot_kv(slots);

  // Depth-first with an explicit stack of per-path replicas.
  struct Frame {
    std::size_t node;
    KvCache cache;
  };
  std::vector<Frame> stack;
  stack.push_back({0, committed.kv});
  {
    const StepOutput out = teacher.forward_step(tree.tokens[0], stack.back().cache);
    std::copy(out.logits.begin(), out.logits.end(), result.logits.logits.begin());
  }
  // Pending children per frame are visited in increasing id order.
  std::vector<std::size_t> next_child(slots, 0);
  while (!stack.empty()) {
    Frame& top = stack.back();
    const std::size_t node = top.node;
    if (next_child[node] == 0) {
      slot_kv[node] = KvCache(top.cache.num_layers(), top.cache.dim());
      slot_kv[node].append_position_from(top.cache, top.cache.seq_len() - 1);
    }
    if (next_child[node] == kids[node].size()) {
      stack.pop_back();
      continue;
    }
    const std::size_t child = kids[node][next_child[node]++];
    Frame frame{child, top.cache};
    const StepOutput out = teacher.forward_step(tree.tokens[child], frame.cache);
    std::copy(out.logits.begin(), out.logits.end(),
              result.logits.logits.begin() +
                  static_cast<std::ptrdiff_t>(child * teacher.vocab_size()));
    stack.push_back(std::move(frame));
  }

  result.branch = replicate(committed);
  result.branch.kv.reserve(prefix_len + slots);
  for (std::size_t s = 0; s < slots; ++s) {
    if (slot_kv[s].num_layers() == 0) {
      throw Error(ErrorCode::kInvariant,
                  fmt::format("slot {} was never evaluated (unreachable node)", s));
    }
    result.branch.kv.append_position_from(slot_kv[s], 0);
  }
  result.logits.new_cache_len = result.branch.seq_len();
  result.argmax = slot_argmax(result.logits);
  return result;
}

AcceptOutcome accept_greedy(const SpecTree& tree, const VerifyResult& verify) {
  const auto kids = children_lists(tree);
  AcceptOutcome out;
  std::size_t cur = 0;
  while (true) {
    const TokenId want = verify.argmax[cur];
    std::size_t next = 0;
    for (std::size_t k : kids[cur]) {
      if (tree.tokens[k] == want) {
        next = k;
        break;
      }
    }
    if (next == 0) break;
    out.chain.push_back(next);
    out.emitted.push_back(tree.tokens[next]);
    cur = next;
  }
  out.accepted = out.chain.size();
  out.bonus = verify.argmax[cur];
  out.emitted.push_back(out.bonus);
  return out;
}

DecodeResult generate_speculative(const Model& teacher, const Model& drafter,
                                  std::span<const TokenId> prompt,
                                  const DecodeConfig& cfg,
                                  const DecodeHooks* hooks) {
  cfg.validate();
  if (teacher.vocab_size() != drafter.vocab_size()) {
    throw Error(ErrorCode::kConfig, "teacher and drafter vocabularies differ");
  }
  DecodeResult result;
  TurnTrace& trace = result.trace;
  trace.kind = "speculative";
  trace.mode = cfg.mode;
  trace.prompt_len = prompt.size();
  if (cfg.profile) trace.stages = StageTimings{};

  FailureContext ctx;
  TokenSeq& output = ctx.output_so_far;
  const auto wall_start = Clock::now();

  try {
    ctx.stage = "prefill";
    CommittedCache committed{teacher.make_cache()};
    const StepOutput pre = teacher.prefill(prompt, committed.kv);
    trace.prefill_ns = elapsed_ns(wall_start);
    trace.teacher_forward_count = 1;
    if (trace.stages) trace.stages->prefill = trace.prefill_ns;

    TokenSeq history(prompt.begin(), prompt.end());
    TokenId pending = static_cast<TokenId>(argmax(pre.row(0)));
    bool stop = false;
    const bool keep_before = hooks != nullptr && static_cast<bool>(hooks->on_iteration);

    while (!stop && output.size() < cfg.max_new_tokens) {
      ctx.iteration = trace.iterations.size();
      ctx.committed_len = committed.seq_len();
      ctx.tree.reset();
      IterationRecord rec;
      StageTimings st;
      StageTimings* timing = cfg.profile ? &st : nullptr;
      const std::size_t L = committed.seq_len();

      ctx.stage = "draft";
      SpecTree tree;
      {
        StageTimer t(stage(timing, &StageTimings::draft));
        history.push_back(pending);
        const TokenSeq draft_ctx = truncate_context(history, cfg.draft.window);
        history.pop_back();
        tree = propose_tree(drafter, draft_ctx, cfg.draft);
        tree.tokens[0] = pending;
      }
      if (hooks != nullptr && hooks->mutate_tree) {
        hooks->mutate_tree(tree, ctx.iteration);
      }
      ctx.tree = tree;

      ctx.stage = "validate";
      {
        StageTimer t(stage(timing, &StageTimings::tensorize));
        require_valid_tree(tree);
      }

      ctx.stage = "verify";
      const std::uint64_t before_sum =
          cfg.mode == ExecutionMode::kReference ? committed.kv.checksum() : 0;
      VerifyResult verify =
          cfg.mode == ExecutionMode::kReference
              ? verify_tree_reference(teacher, committed, tree, L, timing)
              : verify_tree_batched(teacher, committed, tree, L, timing);
      ++trace.teacher_forward_count;
      if (cfg.mode == ExecutionMode::kReference &&
          committed.kv.checksum() != before_sum) {
        throw Error(ErrorCode::kInvariant,
                    "committed cache changed during verification");
      }

      ctx.stage = "accept";
      AcceptOutcome acc;
      {
        StageTimer t(stage(timing, &StageTimings::accept));
        acc = accept_greedy(tree, verify);
      }

      ctx.stage = "commit";
      PathIndices path;
      CommittedCache next;
      {
        StageTimer t(stage(timing, &StageTimings::commit));
        if (cfg.commit == CommitStrategy::kPath) {
          path = accepted_path_indices(tree, acc.chain, L);
          PathCommit pc = commit_by_path_indices(
              keep_before ? CommittedCache(committed) : std::move(committed),
              verify.branch, path, cfg.fast_cache_reorder);
          next = std::move(pc.cache);
          rec.commit_mode = pc.mode;
          rec.fast_fallback = pc.fallback;
        } else {
          // The selected candidate branch holds the root slot followed by the
          // accepted path, in order.
          BranchCache candidate = replicate(committed);
          candidate.kv.append_position_from(verify.branch.kv, L);
          for (std::size_t node : acc.chain) {
            candidate.kv.append_position_from(verify.branch.kv, L + node);
          }
          next = commit_by_length(committed, candidate, acc.accepted + 1);
          rec.commit_mode = CommitMode::kLength;
        }
      }
      if (next.seq_len() != L + acc.accepted + 1) {
        throw Error(ErrorCode::kInvariant,
                    fmt::format("commit produced length {}, expected {}",
                                next.seq_len(), L + acc.accepted + 1));
      }

      output.push_back(pending);
      history.push_back(pending);
      for (std::size_t i = 0; i < acc.accepted; ++i) {
        output.push_back(acc.emitted[i]);
        history.push_back(acc.emitted[i]);
      }
      if (cfg.eos_token) {
        const auto eos = std::find(output.end() - static_cast<std::ptrdiff_t>(acc.accepted + 1),
                                   output.end(), *cfg.eos_token);
        if (eos != output.end()) {
          output.erase(eos + 1, output.end());
          stop = true;
        }
      }

      rec.accepted = acc.accepted;
      rec.tree_size = tree.valid_nodes();
      rec.depth_used = tree.max_depth();
      if (cfg.profile) {
        rec.stages = st;
        *trace.stages += st;
      }
      trace.iterations.push_back(rec);

      if (hooks != nullptr && hooks->on_iteration) {
        hooks->on_iteration(IterationView{ctx.iteration, tree, verify, acc,
                                          committed, next, path, output});
      }
      committed = std::move(next);
      pending = acc.bonus;
    }
  } catch (const DecodeFailure&) {
    throw;
  } catch (const StructureError& e) {
    ctx.structure = e.issue();
    throw DecodeFailure(e, ctx);
  } catch (const Error& e) {
    throw DecodeFailure(e, ctx);
  }

  trace.wall_ns = elapsed_ns(wall_start);
  if (output.size() > cfg.max_new_tokens) output.resize(cfg.max_new_tokens);
  result.tokens = output;
  trace.output = output;
  trace.output_len = output.size();
  return result;
}

}  // namespace treespec
