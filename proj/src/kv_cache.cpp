// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidspec/kv_cache.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "vidspec/common.hpp"

namespace vidspec {

KvCache::KvCache(int n_layers, int d_model, std::size_t capacity)
    : n_layers_(n_layers),
      d_model_(d_model),
      capacity_(capacity),
      keys_(static_cast<std::size_t>(n_layers)),
      values_(static_cast<std::size_t>(n_layers)) {
  if (n_layers < 1 || d_model < 1) throw ConfigError("kv cache needs positive layer count and width");
}

std::size_t KvCache::append(std::int64_t position) {
  if (positions_.size() >= capacity_) {
    throw ShapeError("kv cache capacity " + std::to_string(capacity_) + " exceeded");
  }
  const std::size_t slot = positions_.size();
  positions_.push_back(position);
  max_position_ = std::max(max_position_, position);
  for (int l = 0; l < n_layers_; ++l) {
    keys_[l].resize(keys_[l].size() + d_model_);
    values_[l].resize(values_[l].size() + d_model_);
  }
  return slot;
}

std::span<float> KvCache::key(int layer, std::size_t slot) {
  return {keys_[layer].data() + slot * d_model_, static_cast<std::size_t>(d_model_)};
}
std::span<float> KvCache::value(int layer, std::size_t slot) {
  return {values_[layer].data() + slot * d_model_, static_cast<std::size_t>(d_model_)};
}
std::span<const float> KvCache::key(int layer, std::size_t slot) const {
  return {keys_[layer].data() + slot * d_model_, static_cast<std::size_t>(d_model_)};
}
std::span<const float> KvCache::value(int layer, std::size_t slot) const {
  return {values_[layer].data() + slot * d_model_, static_cast<std::size_t>(d_model_)};
}

void KvCache::rollback(std::size_t keep) {
  if (keep > length()) {
    throw ShapeError("rollback keeps " + std::to_string(keep) + " slots but cache holds " +
                     std::to_string(length()));
  }
  positions_.resize(keep);
  for (int l = 0; l < n_layers_; ++l) {
    keys_[l].resize(keep * d_model_);
    values_[l].resize(keep * d_model_);
  }
  recompute_max_position();
}

void KvCache::rollback(std::span<const std::size_t> keep_slots) {
  for (std::size_t i = 0; i < keep_slots.size(); ++i) {
    if (keep_slots[i] >= length()) throw ShapeError("rollback slot index exceeds cache length");
    if (i > 0 && keep_slots[i] <= keep_slots[i - 1]) {
      throw OrderingError("rollback slot indices must be strictly increasing");
    }
  }
  const std::size_t d = static_cast<std::size_t>(d_model_);
  for (std::size_t dst = 0; dst < keep_slots.size(); ++dst) {
    const std::size_t src = keep_slots[dst];
    if (src == dst) continue;
    positions_[dst] = positions_[src];
    for (int l = 0; l < n_layers_; ++l) {
      std::copy_n(keys_[l].begin() + src * d, d, keys_[l].begin() + dst * d);
      std::copy_n(values_[l].begin() + src * d, d, values_[l].begin() + dst * d);
    }
  }
  rollback(keep_slots.size());
}

void KvCache::fill_synthetic(std::size_t n, std::uint64_t seed) {
  rollback(0);
  if (n > capacity_) throw ShapeError("synthetic fill exceeds kv cache capacity");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  positions_.resize(n);
  for (std::size_t i = 0; i < n; ++i) positions_[i] = static_cast<std::int64_t>(i);
  for (int l = 0; l < n_layers_; ++l) {
    keys_[l].resize(n * d_model_);
    values_[l].resize(n * d_model_);
    for (auto& x : keys_[l]) x = dist(rng);
    for (auto& x : values_[l]) x = dist(rng);
  }
  recompute_max_position();
}

void KvCache::recompute_max_position() {
  max_position_ = -1;
  for (auto p : positions_) max_position_ = std::max(max_position_, p);
}

}  // namespace vidspec
