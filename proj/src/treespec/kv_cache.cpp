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

#include "treespec/kv_cache.h"

#include <cstring>

namespace treespec {

KvCache::KvCache(std::size_t num_layers, std::size_t dim)
    : layers_(num_layers) {
  for (auto& l : layers_) l.dim = dim;
}

void KvCache::append(std::size_t layer, std::span<const double> key,
                     std::span<const double> value) {
  auto& l = layers_.at(layer);
  l.keys.insert(l.keys.end(), key.begin(), key.end());
  l.values.insert(l.values.end(), value.begin(), value.end());
}

void KvCache::append_position_from(const KvCache& src, std::size_t pos) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& s = src.layers_[i];
    append(i, s.key(pos), s.value(pos));
  }
}

void KvCache::truncate(std::size_t len) {
  for (auto& l : layers_) {
    l.keys.resize(len * l.dim);
    l.values.resize(len * l.dim);
  }
}

void KvCache::reserve(std::size_t positions) {
  for (auto& l : layers_) {
    l.keys.reserve(positions * l.dim);
    l.values.reserve(positions * l.dim);
  }
}

std::uint64_t KvCache::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::vector<double>& v) {
    for (double x : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    }
  };
  for (const auto& l : layers_) {
    mix(l.keys);
    mix(l.values);
  }
  return h;
}

}  // namespace treespec
