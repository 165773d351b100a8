// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vidspec {

// Per-layer key/value store. Keys are stored after rotary encoding, so each
// slot carries the position tag it was encoded with.
class KvCache {
 public:
  KvCache(int n_layers, int d_model, std::size_t capacity);

  std::size_t length() const { return positions_.size(); }
  std::size_t capacity() const { return capacity_; }
  int n_layers() const { return n_layers_; }
  int d_model() const { return d_model_; }

  std::span<const std::int64_t> positions() const { return positions_; }
  // One past the largest position tag, or 0 for an empty cache.
  std::int64_t next_position() const { return max_position_ + 1; }

  // Appends an uninitialized slot; the model fills keys/values for every layer.
  std::size_t append(std::int64_t position);

  std::span<float> key(int layer, std::size_t slot);
  std::span<float> value(int layer, std::size_t slot);
  std::span<const float> key(int layer, std::size_t slot) const;
  std::span<const float> value(int layer, std::size_t slot) const;

  // Keep the first `keep` slots.
  void rollback(std::size_t keep);
  // Keep exactly the listed slots (strictly increasing), compacted in order.
  void rollback(std::span<const std::size_t> keep_slots);

  // Fills the cache with `n` slots of seeded random keys/values at positions
  // 0..n-1. Only used to stage a given context length for latency measurement.
  void fill_synthetic(std::size_t n, std::uint64_t seed);

 private:
  void recompute_max_position();

  int n_layers_;
  int d_model_;
  std::size_t capacity_;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
  std::vector<std::int64_t> positions_;
  std::int64_t max_position_ = -1;
};

}  // namespace vidspec
