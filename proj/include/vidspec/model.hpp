// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vidspec/kv_cache.hpp"
#include "vidspec/sequence.hpp"

namespace vidspec {

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int vocab_size = 256;
  // Width of incoming video features; 0 means d_model.
  int video_dim = 0;
  int ffn_mult = 4;
  double rope_theta = 10000.0;
  int max_positions = 4096;
  std::uint64_t seed = 0;

  int d_head() const { return d_model / n_heads; }
  int d_ffn() const { return d_model * ffn_mult; }
  int video_features() const { return video_dim > 0 ? video_dim : d_model; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
  std::vector<float> attn_norm;  // [d]
  std::vector<float> wq, wk, wv, wo;  // [d x d], row = output unit
  std::vector<float> ffn_norm;   // [d]
  std::vector<float> w_up;       // [ffn x d]
  std::vector<float> w_down;     // [d x ffn]
};

struct TensorRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float>* data;
};

struct ModelWeights {
  std::vector<float> tok_embedding;  // [vocab x d]
  std::vector<float> video_proj;     // [d x video_dim]
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;     // [d]
  std::vector<float> lm_head;        // [vocab x d]

  // Stable enumeration used by checkpoints and the trainer.
  std::vector<TensorRef> tensors(const ModelConfig& config);
  bool operator==(const ModelWeights& other) const;
};

// Post-softmax attention probabilities captured during prefill. Rows
// [first_row, n) are stored for every layer and head; each row spans all n
// keys, with zeros outside the causal support.
struct AttentionCapture {
  int n_layers = 0;
  int n_heads = 0;
  std::size_t seq_len = 0;
  std::size_t first_row = 0;
  std::vector<float> probs;  // [layer][head][row - first_row][key]

  std::size_t rows() const { return seq_len - first_row; }
  float at(int layer, int head, std::size_t row, std::size_t key) const {
    return probs[((static_cast<std::size_t>(layer) * n_heads + head) * rows() + (row - first_row)) * seq_len + key];
  }
};

struct PrefillResult {
  KvCache cache;
  std::vector<float> logits;  // last item
  std::optional<AttentionCapture> capture;
};

// One row of input: a language token or a video feature vector.
struct RowInput {
  int token = -1;
  std::span<const float> embedding;

  static RowInput language(int token) { return {token, {}}; }
  static RowInput video(std::span<const float> e) { return {-1, e}; }
};

// Pre-norm decoder-only transformer with rotary positions and an untied head.
// All row computations use a fixed accumulation order that does not depend on
// how many rows are processed together, so batched, tree-masked and
// incremental forwards agree bitwise.
class Model {
 public:
  static Model init(const ModelConfig& config);
  Model(ModelConfig config, ModelWeights weights);

  const ModelConfig& config() const { return config_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& mutable_weights() { return weights_; }

  KvCache make_cache() const;

  // Full prefill. When `capture` is set, attention rows from
  // `capture_first_row` onward are recorded.
  PrefillResult prefill(const MultimodalSequence& seq, bool capture = false,
                        std::size_t capture_first_row = 0) const;

  // Appends one item at `position`, which must exceed every position in cache.
  std::vector<float> decode_step(KvCache& cache, const RowInput& input, std::int64_t position) const;
  std::vector<float> decode_step(KvCache& cache, int token, std::int64_t position) const {
    return decode_step(cache, RowInput::language(token), position);
  }

  // Causal chain of rows appended after the cache; returns logits for every row.
  std::vector<std::vector<float>> forward_chain(KvCache& cache, std::span<const int> tokens,
                                                std::int64_t first_position) const;

  // Tree-masked forward. mask[i][j] (j <= i) marks node j as visible to node
  // i; each node must see exactly its ancestors and itself. Node positions
  // must equal cache.next_position() + depth. Appends all nodes to the cache.
  std::vector<std::vector<float>> forward_tree(KvCache& cache, std::span<const int> tokens,
                                               std::span<const std::int64_t> positions,
                                               const std::vector<std::vector<std::uint8_t>>& mask) const;

  // Lowest-level entry point. Rows are appended in order starting at
  // cache.length(); row i attends to cache slots [0, visibility[i].prefix)
  // followed by visibility[i].extra (increasing slot indices >= prefix). The
  // slot a row is written to must be visible to it. Returns logits for the
  // rows listed in `logit_rows`.
  struct Visibility {
    std::size_t prefix = 0;
    std::vector<std::size_t> extra;
  };
  std::vector<std::vector<float>> forward_rows(KvCache& cache, std::span<const RowInput> inputs,
                                               std::span<const std::int64_t> positions,
                                               std::span<const Visibility> visibility,
                                               std::span<const std::size_t> logit_rows,
                                               AttentionCapture* capture = nullptr) const;

 private:
  ModelConfig config_;
  ModelWeights weights_;
  std::vector<float> rope_inv_freq_;
};

// Checkpoint container: text header (config + per-tensor name/dtype/shape/
// offset), then raw little-endian float32 data.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace vidspec
