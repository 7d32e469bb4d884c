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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "treespec/attention_mask.h"
#include "treespec/common.h"
#include "treespec/kv_cache.h"

namespace treespec {

enum class Precision { kSingle, kDouble };

const char* precision_name(Precision p);
Precision parse_precision(const std::string& name);

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 16;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_dim = 64;
  std::uint64_t seed = 7;
  Precision precision = Precision::kDouble;

  // Throws Error{kConfig} when a dimension is zero, V < 2 or d % H != 0.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Absolute tolerance used when comparing logits or KV entries produced by
// different evaluation orders of the same model.
double model_tolerance(Precision p);

// Counter-based parameter generator. Every named tensor gets its own stream
// keyed by splitmix64(seed ^ fnv1a64(name)); element i of the stream is
//   bits = splitmix64(key + splitmix64(i))
//   u    = (bits >> 11) * 2^-53                 in [0, 1)
//   w    = -0.1 + 0.2 * u                       in [-0.1, 0.1)
// so a tensor depends only on (seed, name, shape), never on generation order.
class ParamStream {
 public:
  ParamStream(std::uint64_t seed, std::string_view name);
  double at(std::uint64_t index) const;
  std::vector<double> fill(std::size_t count) const;

 private:
  std::uint64_t key_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

struct LayerParams {
  std::vector<double> wq, wk, wv, wo;  // d x d, row-major
  std::vector<double> w1;              // d x ffn
  std::vector<double> w2;              // ffn x d
};

struct ModelParams {
  std::vector<double> embedding;  // V x d, tied with the output projection
  std::vector<LayerParams> layers;
};

// Logits for every evaluated slot, row-major slots x V.
struct StepOutput {
  std::size_t vocab = 0;
  std::vector<double> logits;
  std::size_t new_cache_len = 0;

  std::size_t slots() const { return vocab == 0 ? 0 : logits.size() / vocab; }
  std::span<const double> row(std::size_t slot) const {
    return {logits.data() + slot * vocab, vocab};
  }
};

// Pre-norm causal transformer with tied embeddings:
//   x   = kEmbedScale * E[tok] + kPositionScale * sinusoid(pos)
//   per layer:  x += MHA(LN(x)) Wo ;  x += tanh(LN(x) W1) W2
//   logits = LN(x) E^T
// LN has no affine parameters. Attention over a row visits the allowed
// columns in column order and skips masked ones outright, so a slot's result
// does not depend on how many other slots share the batch.
//
// The input scales keep token identity and position small next to a residual
// update. Larger embedding scales let the tied output head echo the input
// token, and the model degenerates into repeating it.
class Model {
 public:
  static constexpr double kEmbedScale = 0.5;
  static constexpr double kPositionScale = 0.02;

  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  std::size_t vocab_size() const { return config_.vocab_size; }

  KvCache make_cache() const;

  // Feeds the whole prompt causally; returns logits of the last position only.
  StepOutput prefill(std::span<const TokenId> prompt, KvCache& cache) const;

  // Appends one token at position cache.seq_len().
  StepOutput forward_step(TokenId token, KvCache& cache) const;

  // Appends S slots in slot order. mask is S x (L + S); positions[k] feeds the
  // positional encoding of slot k. Returns S logits rows.
  StepOutput forward_masked_batch(std::span<const TokenId> tokens,
                                  KvCache& cache, const AttentionMask& mask,
                                  std::span<const std::size_t> positions) const;

  std::uint64_t param_checksum() const;

 private:
  double round(double v) const;
  void check_tokens(std::span<const TokenId> tokens) const;

  ModelConfig config_;
  ModelParams params_;
};

}  // namespace treespec
