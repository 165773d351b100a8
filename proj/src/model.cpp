// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidspec/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "vidspec/common.hpp"

namespace vidspec {
namespace {

constexpr float kNormEps = 1e-5f;

// Eight independent partial sums combined in a fixed order. The result only
// depends on the two input vectors, never on the caller's batch shape.
inline float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// y = W x, W is [rows x cols] row-major.
inline void matvec(const std::vector<float>& w, std::size_t rows, std::size_t cols, const float* x, float* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(w.data() + r * cols, x, cols);
}

inline void rmsnorm(const float* x, const std::vector<float>& gain, std::size_t d, float* out) {
  const float ms = dot(x, x, d) / static_cast<float>(d);
  const float scale = 1.0f / std::sqrt(ms + kNormEps);
  for (std::size_t i = 0; i < d; ++i) out[i] = x[i] * scale * gain[i];
}

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

std::vector<float> random_matrix(std::mt19937_64& rng, std::size_t n, float stddev) {
  std::normal_distribution<float> dist(0.0f, stddev);
  std::vector<float> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || vocab_size < 1 || max_positions < 1 || ffn_mult < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (d_head() % 2 != 0) throw ConfigError("rotary encoding needs an even head width");
  if (video_dim < 0) throw ConfigError("video_dim must be >= 0");
  if (!(rope_theta > 0.0)) throw ConfigError("rope_theta must be positive");
}

std::vector<TensorRef> ModelWeights::tensors(const ModelConfig& c) {
  const std::size_t d = c.d_model, v = c.vocab_size, f = c.d_ffn(), vd = c.video_features();
  std::vector<TensorRef> out;
  out.push_back({"tok_embedding", {v, d}, &tok_embedding});
  out.push_back({"video_proj", {d, vd}, &video_proj});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& L = layers[l];
    out.push_back({p + "attn_norm", {d}, &L.attn_norm});
    out.push_back({p + "wq", {d, d}, &L.wq});
    out.push_back({p + "wk", {d, d}, &L.wk});
    out.push_back({p + "wv", {d, d}, &L.wv});
    out.push_back({p + "wo", {d, d}, &L.wo});
    out.push_back({p + "ffn_norm", {d}, &L.ffn_norm});
    out.push_back({p + "w_up", {f, d}, &L.w_up});
    out.push_back({p + "w_down", {d, f}, &L.w_down});
  }
  out.push_back({"final_norm", {d}, &final_norm});
  out.push_back({"lm_head", {v, d}, &lm_head});
  return out;
}

bool ModelWeights::operator==(const ModelWeights& o) const {
  if (layers.size() != o.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = o.layers[l];
    if (a.attn_norm != b.attn_norm || a.wq != b.wq || a.wk != b.wk || a.wv != b.wv || a.wo != b.wo ||
        a.ffn_norm != b.ffn_norm || a.w_up != b.w_up || a.w_down != b.w_down) {
      return false;
    }
  }
  return tok_embedding == o.tok_embedding && video_proj == o.video_proj && final_norm == o.final_norm &&
         lm_head == o.lm_head;
}

Model Model::init(const ModelConfig& config) {
  config.validate();
  // Every matrix ~ N(0, 0.02 / sqrt(n_layers)); norm gains start at 1.
  const float scale = 0.02f / std::sqrt(static_cast<float>(config.n_layers));
  const std::size_t d = config.d_model, v = config.vocab_size, f = config.d_ffn();
  std::mt19937_64 rng(config.seed);
  ModelWeights w;
  w.tok_embedding = random_matrix(rng, v * d, scale);
  w.video_proj = random_matrix(rng, d * config.video_features(), scale);
  w.layers.resize(config.n_layers);
  for (auto& L : w.layers) {
    L.attn_norm.assign(d, 1.0f);
    L.wq = random_matrix(rng, d * d, scale);
    L.wk = random_matrix(rng, d * d, scale);
    L.wv = random_matrix(rng, d * d, scale);
    L.wo = random_matrix(rng, d * d, scale);
    L.ffn_norm.assign(d, 1.0f);
    L.w_up = random_matrix(rng, f * d, scale);
    L.w_down = random_matrix(rng, d * f, scale);
  }
  w.final_norm.assign(d, 1.0f);
  w.lm_head = random_matrix(rng, v * d, scale);
  return Model(config, std::move(w));
}

Model::Model(ModelConfig config, ModelWeights weights) : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  for (auto& t : weights_.tensors(config_)) {
    std::size_t n = 1;
    for (auto s : t.shape) n *= s;
    if (t.data->size() != n) throw ShapeError("weight tensor " + t.name + " has wrong size");
  }
  if (weights_.layers.size() != static_cast<std::size_t>(config_.n_layers)) {
    throw ShapeError("layer count does not match config");
  }
  const int half = config_.d_head() / 2;
  rope_inv_freq_.resize(half);
  for (int i = 0; i < half; ++i) {
    rope_inv_freq_[i] =
        static_cast<float>(std::pow(config_.rope_theta, -2.0 * i / static_cast<double>(config_.d_head())));
  }
}

KvCache Model::make_cache() const {
  return KvCache(config_.n_layers, config_.d_model, 2 * static_cast<std::size_t>(config_.max_positions));
}

std::vector<std::vector<float>> Model::forward_rows(KvCache& cache, std::span<const RowInput> inputs,
                                                    std::span<const std::int64_t> positions,
                                                    std::span<const Visibility> visibility,
                                                    std::span<const std::size_t> logit_rows,
                                                    AttentionCapture* capture) const {
  const std::size_t n = inputs.size();
  const std::size_t d = config_.d_model;
  const std::size_t dh = config_.d_head();
  const std::size_t nh = config_.n_heads;
  const std::size_t ffn = config_.d_ffn();
  const std::size_t base = cache.length();
  if (positions.size() != n || visibility.size() != n) throw ShapeError("forward_rows argument length mismatch");

  for (std::size_t i = 0; i < n; ++i) {
    if (positions[i] < 0 || positions[i] >= config_.max_positions) {
      throw ShapeError("position " + std::to_string(positions[i]) + " outside [0, max_positions)");
    }
    const auto& vis = visibility[i];
    const std::size_t self = base + i;
    if (vis.prefix > self + 1) throw MaskError("row sees slots that are not yet written");
    bool sees_self = vis.prefix > self;
    for (std::size_t k = 0; k < vis.extra.size(); ++k) {
      if (vis.extra[k] < vis.prefix || vis.extra[k] > self || (k > 0 && vis.extra[k] <= vis.extra[k - 1])) {
        throw MaskError("visible slot list must be increasing, beyond the prefix, and causal");
      }
      sees_self |= vis.extra[k] == self;
    }
    if (!sees_self) throw MaskError("row must attend to itself");
    if (inputs[i].token >= 0) {
      if (inputs[i].token >= config_.vocab_size) throw ShapeError("token id outside vocabulary");
    } else if (inputs[i].embedding.size() != static_cast<std::size_t>(config_.video_features())) {
      throw ShapeError("video embedding has width " + std::to_string(inputs[i].embedding.size()) + ", expected " +
                       std::to_string(config_.video_features()));
    }
  }
  for (std::size_t r : logit_rows) {
    if (r >= n) throw ShapeError("logit row out of range");
  }

  for (std::size_t i = 0; i < n; ++i) cache.append(positions[i]);

  std::vector<float> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    if (inputs[i].token >= 0) {
      std::copy_n(weights_.tok_embedding.begin() + static_cast<std::ptrdiff_t>(inputs[i].token * d), d,
                  x.begin() + static_cast<std::ptrdiff_t>(i * d));
    } else {
      matvec(weights_.video_proj, d, config_.video_features(), inputs[i].embedding.data(), x.data() + i * d);
    }
  }

  if (capture != nullptr) {
    capture->n_layers = config_.n_layers;
    capture->n_heads = config_.n_heads;
    capture->seq_len = base + n;
    capture->probs.assign(static_cast<std::size_t>(config_.n_layers) * nh * capture->rows() * capture->seq_len,
                          0.0f);
  }

  const float attn_scale = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<float> h(d), q(n * d), att(d), proj(d), up(ffn), scores;
  std::vector<std::size_t> slots;

  auto apply_rope = [&](float* vec, std::int64_t pos) {
    for (std::size_t head = 0; head < nh; ++head) {
      float* hv = vec + head * dh;
      for (std::size_t k = 0; k < dh / 2; ++k) {
        const double angle = static_cast<double>(pos) * rope_inv_freq_[k];
        const float c = static_cast<float>(std::cos(angle));
        const float s = static_cast<float>(std::sin(angle));
        const float a = hv[2 * k], b = hv[2 * k + 1];
        hv[2 * k] = a * c - b * s;
        hv[2 * k + 1] = a * s + b * c;
      }
    }
  };

  for (int l = 0; l < config_.n_layers; ++l) {
    const auto& L = weights_.layers[l];
    for (std::size_t i = 0; i < n; ++i) {
      rmsnorm(x.data() + i * d, L.attn_norm, d, h.data());
      matvec(L.wq, d, d, h.data(), q.data() + i * d);
      auto key = cache.key(l, base + i);
      auto val = cache.value(l, base + i);
      matvec(L.wk, d, d, h.data(), key.data());
      matvec(L.wv, d, d, h.data(), val.data());
      apply_rope(q.data() + i * d, positions[i]);
      apply_rope(key.data(), positions[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& vis = visibility[i];
      slots.clear();
      for (std::size_t s = 0; s < vis.prefix; ++s) slots.push_back(s);
      slots.insert(slots.end(), vis.extra.begin(), vis.extra.end());
      scores.resize(slots.size());
      const std::size_t row = base + i;
      const bool record = capture != nullptr && row >= capture->first_row;
      for (std::size_t head = 0; head < nh; ++head) {
        const float* qh = q.data() + i * d + head * dh;
        float mx = -INFINITY;
        for (std::size_t j = 0; j < slots.size(); ++j) {
          scores[j] = dot(qh, cache.key(l, slots[j]).data() + head * dh, dh) * attn_scale;
          mx = std::max(mx, scores[j]);
        }
        float sum = 0.0f;
        for (auto& s : scores) {
          s = std::exp(s - mx);
          sum += s;
        }
        float* out = att.data() + head * dh;
        std::fill_n(out, dh, 0.0f);
        for (std::size_t j = 0; j < slots.size(); ++j) {
          const float p = scores[j] / sum;
          const float* vh = cache.value(l, slots[j]).data() + head * dh;
          for (std::size_t k = 0; k < dh; ++k) out[k] += p * vh[k];
          if (record) {
            capture->probs[((static_cast<std::size_t>(l) * nh + head) * capture->rows() + (row - capture->first_row)) *
                               capture->seq_len +
                           slots[j]] = p;
          }
        }
      }
      float* xi = x.data() + i * d;
      matvec(L.wo, d, d, att.data(), proj.data());
      for (std::size_t k = 0; k < d; ++k) xi[k] += proj[k];
      rmsnorm(xi, L.ffn_norm, d, h.data());
      matvec(L.w_up, ffn, d, h.data(), up.data());
      for (auto& u : up) u = silu(u);
      matvec(L.w_down, d, ffn, up.data(), proj.data());
      for (std::size_t k = 0; k < d; ++k) xi[k] += proj[k];
    }
  }

  std::vector<std::vector<float>> logits;
  logits.reserve(logit_rows.size());
  for (std::size_t r : logit_rows) {
    rmsnorm(x.data() + r * d, weights_.final_norm, d, h.data());
    std::vector<float> out(config_.vocab_size);
    matvec(weights_.lm_head, config_.vocab_size, d, h.data(), out.data());
    logits.push_back(std::move(out));
  }
  return logits;
}

PrefillResult Model::prefill(const MultimodalSequence& seq, bool capture, std::size_t capture_first_row) const {
  if (seq.items.empty()) throw ShapeError("cannot prefill an empty sequence");
  seq.validate();
  if (capture && capture_first_row >= seq.size()) throw ShapeError("capture_first_row beyond sequence");
  const std::size_t n = seq.size();
  std::vector<RowInput> inputs;
  inputs.reserve(n);
  for (const auto& item : seq.items) {
    inputs.push_back(item.modality == Modality::kLanguage ? RowInput::language(item.token)
                                                          : RowInput::video(item.embedding));
  }
  std::vector<Visibility> vis(n);
  for (std::size_t i = 0; i < n; ++i) vis[i].prefix = i + 1;
  const std::size_t last = n - 1;
  PrefillResult result{make_cache(), {}, std::nullopt};
  AttentionCapture cap;
  cap.first_row = capture_first_row;
  auto logits = forward_rows(result.cache, inputs, seq.positions, vis, std::span(&last, 1), capture ? &cap : nullptr);
  result.logits = std::move(logits.front());
  if (capture) result.capture = std::move(cap);
  return result;
}

std::vector<float> Model::decode_step(KvCache& cache, const RowInput& input, std::int64_t position) const {
  if (position < cache.next_position()) {
    throw OrderingError("decode position " + std::to_string(position) + " does not follow cache position " +
                        std::to_string(cache.next_position() - 1));
  }
  Visibility vis{cache.length() + 1, {}};
  const std::size_t row = 0;
  return std::move(forward_rows(cache, std::span(&input, 1), std::span(&position, 1), std::span(&vis, 1),
                                std::span(&row, 1))
                       .front());
}

std::vector<std::vector<float>> Model::forward_chain(KvCache& cache, std::span<const int> tokens,
                                                     std::int64_t first_position) const {
  if (tokens.empty()) return {};
  if (first_position < cache.next_position()) throw OrderingError("chain position does not follow the cache");
  const std::size_t n = tokens.size();
  const std::size_t base = cache.length();
  std::vector<RowInput> inputs(n);
  std::vector<std::int64_t> positions(n);
  std::vector<Visibility> vis(n);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = RowInput::language(tokens[i]);
    positions[i] = first_position + static_cast<std::int64_t>(i);
    vis[i].prefix = base + i + 1;
    rows[i] = i;
  }
  return forward_rows(cache, inputs, positions, vis, rows);
}

std::vector<std::vector<float>> Model::forward_tree(KvCache& cache, std::span<const int> tokens,
                                                    std::span<const std::int64_t> positions,
                                                    const std::vector<std::vector<std::uint8_t>>& mask) const {
  const std::size_t n = tokens.size();
  if (positions.size() != n || mask.size() != n) throw ShapeError("tree tokens/positions/mask size mismatch");
  std::vector<int> depth(n, 0);
  std::vector<int> parent(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i].size() != n) throw MaskError("tree mask must be square");
    if (!mask[i][i]) throw MaskError("tree node must attend to itself");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (mask[i][j]) throw MaskError("tree node attends to a later node");
    }
    for (std::size_t j = i; j-- > 0;) {
      if (mask[i][j]) {
        parent[i] = static_cast<int>(j);
        break;
      }
    }
    if (parent[i] >= 0) {
      const auto p = static_cast<std::size_t>(parent[i]);
      for (std::size_t j = 0; j < p; ++j) {
        if (mask[i][j] != mask[p][j]) throw MaskError("tree mask admits a non-ancestor node");
      }
      depth[i] = depth[p] + 1;
    }
  }
  const std::int64_t root_position = cache.next_position();
  for (std::size_t i = 0; i < n; ++i) {
    if (positions[i] != root_position + depth[i]) {
      throw OrderingError("tree node position must equal cache end + depth");
    }
  }
  const std::size_t base = cache.length();
  std::vector<RowInput> inputs(n);
  std::vector<Visibility> vis(n);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs[i] = RowInput::language(tokens[i]);
    vis[i].prefix = base;
    for (std::size_t j = 0; j <= i; ++j) {
      if (mask[i][j]) vis[i].extra.push_back(base + j);
    }
    rows[i] = i;
  }
  return forward_rows(cache, inputs, positions, vis, rows);
}

}  // namespace vidspec
