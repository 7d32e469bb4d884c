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
#include <vector>

namespace treespec {

// Keys and values of one attention layer, one d-dim row per cached position.
struct LayerKV {
  std::size_t dim = 0;
  std::vector<double> keys;
  std::vector<double> values;

  std::size_t length() const { return dim == 0 ? 0 : keys.size() / dim; }
  std::span<const double> key(std::size_t pos) const {
    return {keys.data() + pos * dim, dim};
  }
  std::span<const double> value(std::size_t pos) const {
    return {values.data() + pos * dim, dim};
  }

  bool operator==(const LayerKV&) const = default;
};

// Per-layer KV state of one sequence. All layers always hold the same number
// of positions.
class KvCache {
 public:
  KvCache() = default;
  KvCache(std::size_t num_layers, std::size_t dim);

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t dim() const { return layers_.empty() ? 0 : layers_[0].dim; }
  std::size_t seq_len() const {
    return layers_.empty() ? 0 : layers_[0].length();
  }

  const LayerKV& layer(std::size_t i) const { return layers_.at(i); }
  const std::vector<LayerKV>& layers() const { return layers_; }

  void append(std::size_t layer, std::span<const double> key,
              std::span<const double> value);
  // Appends position `pos` of every layer of `src`.
  void append_position_from(const KvCache& src, std::size_t pos);
  void truncate(std::size_t len);
  void reserve(std::size_t positions);

  // FNV-1a over the raw bytes of every key and value.
  std::uint64_t checksum() const;

  bool operator==(const KvCache&) const = default;

 private:
  std::vector<LayerKV> layers_;
};

}  // namespace treespec
