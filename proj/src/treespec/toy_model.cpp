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

#include "treespec/toy_model.h"

#include <cmath>
#include <cstring>
#include <fmt/format.h>

namespace treespec {

namespace {

constexpr double kLayerNormEps = 1e-5;

// out[j] = sum_i in[i] * w[i * cols + j]
void vec_mat(std::span<const double> in, const std::vector<double>& w,
             std::size_t cols, std::span<double> out) {
  for (std::size_t j = 0; j < cols; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double x = in[i];
    const double* row = w.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += x * row[j];
  }
}

void layer_norm(std::span<const double> in, std::span<double> out) {
  double mean = 0.0;
  for (double v : in) mean += v;
  mean /= static_cast<double>(in.size());
  double var = 0.0;
  for (double v : in) var += (v - mean) * (v - mean);
  var /= static_cast<double>(in.size());
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - mean) * inv;
}

double sinusoid(std::size_t pos, std::size_t i, std::size_t dim) {
  const double rate =
      std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
  const double angle = static_cast<double>(pos) * rate;
  return i % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

}  // namespace

const char* precision_name(Precision p) {
  return p == Precision::kSingle ? "single" : "double";
}

Precision parse_precision(const std::string& name) {
  if (name == "single") return Precision::kSingle;
  if (name == "double") return Precision::kDouble;
  throw Error(ErrorCode::kConfig, "unknown precision '" + name + "'");
}

void ModelConfig::validate() const {
  if (vocab_size < 2) {
    throw Error(ErrorCode::kConfig, "vocab_size must be >= 2");
  }
  if (embed_dim == 0 || num_layers == 0 || num_heads == 0 || ffn_dim == 0) {
    throw Error(ErrorCode::kConfig, "model dimensions must be >= 1");
  }
  if (embed_dim % num_heads != 0) {
    throw Error(ErrorCode::kConfig,
                fmt::format("embed_dim {} is not divisible by num_heads {}",
                            embed_dim, num_heads));
  }
}

double model_tolerance(Precision p) {
  return p == Precision::kSingle ? 1e-3 : 1e-6;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ParamStream::ParamStream(std::uint64_t seed, std::string_view name)
    : key_(splitmix64(seed ^ fnv1a64(name))) {}

double ParamStream::at(std::uint64_t index) const {
  const std::uint64_t bits = splitmix64(key_ + splitmix64(index));
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
  return -0.1 + 0.2 * u;
}

std::vector<double> ParamStream::fill(std::size_t count) const {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = at(i);
  return out;
}

Model::Model(ModelConfig config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.embed_dim;
  const std::size_t f = config_.ffn_dim;
  auto gen = [this](const std::string& name, std::size_t n) {
    auto v = ParamStream(config_.seed, name).fill(n);
    for (double& x : v) x = round(x);
    return v;
  };
  params_.embedding = gen("embedding", config_.vocab_size * d);
  params_.layers.resize(config_.num_layers);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    auto& lp = params_.layers[l];
    lp.wq = gen(p + "wq", d * d);
    lp.wk = gen(p + "wk", d * d);
    lp.wv = gen(p + "wv", d * d);
    lp.wo = gen(p + "wo", d * d);
    lp.w1 = gen(p + "w1", d * f);
    lp.w2 = gen(p + "w2", f * d);
  }
}

double Model::round(double v) const {
  return config_.precision == Precision::kSingle
             ? static_cast<double>(static_cast<float>(v))
             : v;
}

KvCache Model::make_cache() const {
  return KvCache(config_.num_layers, config_.embed_dim);
}

void Model::check_tokens(std::span<const TokenId> tokens) const {
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw Error(ErrorCode::kTokenRange,
                  fmt::format("token {} outside [0, {})", t, config_.vocab_size));
    }
  }
}

StepOutput Model::prefill(std::span<const TokenId> prompt,
                          KvCache& cache) const {
  if (prompt.empty()) {
    throw Error(ErrorCode::kShape, "prefill requires a non-empty prompt");
  }
  const std::size_t n = prompt.size();
  const std::size_t base = cache.seq_len();
  AttentionMask mask(n, base + n, 0.0);
  std::vector<std::size_t> positions(n);
  for (std::size_t r = 0; r < n; ++r) {
    positions[r] = base + r;
    for (std::size_t c = r + 1; c < n; ++c) mask.at(r, base + c) = kMaskedOut;
  }
  StepOutput all = forward_masked_batch(prompt, cache, mask, positions);
  StepOutput last;
  last.vocab = all.vocab;
  last.new_cache_len = all.new_cache_len;
  const auto row = all.row(n - 1);
  last.logits.assign(row.begin(), row.end());
  return last;
}

StepOutput Model::forward_step(TokenId token, KvCache& cache) const {
  const TokenId tokens[1] = {token};
  const std::size_t positions[1] = {cache.seq_len()};
  AttentionMask mask(1, cache.seq_len() + 1, 0.0);
  return forward_masked_batch(tokens, cache, mask, positions);
}

StepOutput Model::forward_masked_batch(
    std::span<const TokenId> tokens, KvCache& cache, const AttentionMask& mask,
    std::span<const std::size_t> positions) const {
  const std::size_t S = tokens.size();
  const std::size_t L = cache.seq_len();
  const std::size_t d = config_.embed_dim;
  const std::size_t V = config_.vocab_size;
  const std::size_t F = config_.ffn_dim;
  const std::size_t H = config_.num_heads;
  const std::size_t hd = d / H;

  if (cache.num_layers() != config_.num_layers || cache.dim() != d) {
    throw Error(ErrorCode::kShape, "cache layout does not match the model");
  }
  if (mask.rows != S || mask.cols != L + S || mask.values.size() != S * (L + S)) {
    throw Error(ErrorCode::kShape,
                fmt::format("mask is {}x{}, expected {}x{}", mask.rows,
                            mask.cols, S, L + S));
  }
  if (positions.size() != S) {
    throw Error(ErrorCode::kShape, "positions length differs from slot count");
  }
  check_tokens(tokens);
  for (std::size_t k = 0; k < S; ++k) {
    if (mask.at(k, L + k) != 0.0) {
      throw Error(ErrorCode::kMaskValidity,
                  fmt::format("slot {} does not attend to itself", k));
    }
  }

  std::vector<double> x(S * d);
  for (std::size_t s = 0; s < S; ++s) {
    const double* e = params_.embedding.data() + tokens[s] * d;
    for (std::size_t i = 0; i < d; ++i) {
      x[s * d + i] = round(kEmbedScale * e[i] +
                           kPositionScale * sinusoid(positions[s], i, d));
    }
  }

  std::vector<double> a(d), q(S * d), k(d), v(d), o(d), proj(d), hid(F);
  std::vector<double> weights(L + S);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const auto& lp = params_.layers[l];
    for (std::size_t s = 0; s < S; ++s) {
      layer_norm({x.data() + s * d, d}, a);
      std::span<double> qs{q.data() + s * d, d};
      vec_mat(a, lp.wq, d, qs);
      vec_mat(a, lp.wk, d, k);
      vec_mat(a, lp.wv, d, v);
      for (std::size_t i = 0; i < d; ++i) {
        qs[i] = round(qs[i]);
        k[i] = round(k[i]);
        v[i] = round(v[i]);
      }
      cache.append(l, k, v);
    }
    const LayerKV& kv = cache.layer(l);
    for (std::size_t s = 0; s < S; ++s) {
      const double* qs = q.data() + s * d;
      for (std::size_t h = 0; h < H; ++h) {
        const std::size_t off = h * hd;
        double best = kMaskedOut;
        for (std::size_t c = 0; c < L + S; ++c) {
          if (!mask.allows(s, c)) continue;
          const double* kc = kv.keys.data() + c * d + off;
          double dot = 0.0;
          for (std::size_t i = 0; i < hd; ++i) dot += qs[off + i] * kc[i];
          weights[c] = dot * scale + mask.at(s, c);
          if (weights[c] > best) best = weights[c];
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < hd; ++i) o[off + i] = 0.0;
        for (std::size_t c = 0; c < L + S; ++c) {
          if (!mask.allows(s, c)) continue;
          const double w = std::exp(weights[c] - best);
          sum += w;
          const double* vc = kv.values.data() + c * d + off;
          for (std::size_t i = 0; i < hd; ++i) o[off + i] += w * vc[i];
        }
        for (std::size_t i = 0; i < hd; ++i) o[off + i] /= sum;
      }
      vec_mat(o, lp.wo, d, proj);
      double* xs = x.data() + s * d;
      for (std::size_t i = 0; i < d; ++i) xs[i] = round(xs[i] + round(proj[i]));
    }
    for (std::size_t s = 0; s < S; ++s) {
      double* xs = x.data() + s * d;
      layer_norm({xs, d}, a);
      vec_mat(a, lp.w1, F, hid);
      for (double& hv : hid) hv = round(std::tanh(hv));
      vec_mat(hid, lp.w2, d, proj);
      for (std::size_t i = 0; i < d; ++i) xs[i] = round(xs[i] + round(proj[i]));
    }
  }

  StepOutput out;
  out.vocab = V;
  out.logits.resize(S * V);
  out.new_cache_len = cache.seq_len();
  for (std::size_t s = 0; s < S; ++s) {
    layer_norm({x.data() + s * d, d}, a);
    for (std::size_t t = 0; t < V; ++t) {
      const double* e = params_.embedding.data() + t * d;
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += a[i] * e[i];
      out.logits[s * V + t] = round(dot);
    }
  }
  return out;
}

std::uint64_t Model::param_checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::vector<double>& v) {
    for (double x : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      h = splitmix64(h ^ bits);
    }
  };
  mix(params_.embedding);
  for (const auto& lp : params_.layers) {
    for (const auto* w : {&lp.wq, &lp.wk, &lp.wv, &lp.wo, &lp.w1, &lp.w2}) {
      mix(*w);
    }
  }
  return h;
}

}  // namespace treespec
