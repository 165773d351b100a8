// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidspec/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vidspec/common.hpp"

namespace vidspec {

void WorkloadSpec::validate() const {
  layout.validate();
  if (n_language_tokens < 1) throw ConfigError("n_language_tokens must be >= 1");
  if (video_dim < 1) throw ConfigError("video_dim must be >= 1");
  if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
  if (!(noise_scale >= 0.0)) throw ConfigError("noise_scale must be >= 0");
  for (auto p : planted) {
    if (p >= layout.size()) throw ConfigError("planted index " + std::to_string(p) + " is outside the video");
  }
  if (!planted.empty() && (pattern < 0 || pattern >= video_dim)) {
    throw ConfigError("pattern must index a video feature dimension");
  }
}

MultimodalSequence gen_workload(const WorkloadSpec& spec) {
  spec.validate();
  std::mt19937_64 erng(spec.embedding_seed);
  std::normal_distribution<float> nd(0.0f, static_cast<float>(spec.noise_scale / std::sqrt(spec.video_dim)));
  std::vector<std::vector<float>> video(spec.layout.size(), std::vector<float>(spec.video_dim));
  for (auto& v : video) {
    for (auto& x : v) x = nd(erng);
  }
  for (auto p : spec.planted) video[p][spec.pattern] += 1.0f;

  std::mt19937_64 qrng(spec.query_seed);
  std::uniform_int_distribution<int> tok(0, spec.vocab_size - 1);
  std::vector<int> language(spec.n_language_tokens);
  for (auto& t : language) t = tok(qrng);
  return MultimodalSequence::build(spec.layout, std::move(video), language);
}

void PlantedTask::validate() const {
  layout.validate();
  if (n_patterns < 1 || n_patterns > video_dim) throw ConfigError("n_patterns must be in [1, video_dim]");
  if (n_planted < 1 || static_cast<std::size_t>(n_planted) > layout.size()) {
    throw ConfigError("n_planted must be in [1, video size]");
  }
  if (n_query < 1 || n_continuation < 0) throw ConfigError("bad planted task lengths");
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
}

std::vector<std::vector<int>> PlantedTask::successors() const {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<int>> out(n_patterns, std::vector<int>(vocab_size));
  for (auto& perm : out) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
  }
  return out;
}

PlantedTask::Sample PlantedTask::sample(std::uint64_t sample_seed, int language_tokens) const {
  validate();
  std::mt19937_64 rng(sample_seed * 0x2545f4914f6cdd1dULL + seed);
  Sample s;
  s.spec.layout = layout;
  s.spec.video_dim = video_dim;
  s.spec.vocab_size = vocab_size;
  s.spec.noise_scale = noise_scale;
  s.spec.n_language_tokens = language_tokens > 0 ? language_tokens : n_query;
  s.spec.pattern = std::uniform_int_distribution<int>(0, n_patterns - 1)(rng);
  std::vector<std::size_t> all(layout.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::shuffle(all.begin(), all.end(), rng);
  s.spec.planted.assign(all.begin(), all.begin() + n_planted);
  std::sort(s.spec.planted.begin(), s.spec.planted.end());
  s.spec.embedding_seed = rng();
  s.spec.query_seed = rng();
  const auto succ = successors();
  s.prompt = gen_workload(s.spec);
  int t = s.prompt.items.back().token;
  for (int i = 0; i < n_continuation; ++i) {
    t = succ[s.spec.pattern][t];
    s.continuation.push_back(t);
  }
  return s;
}

}  // namespace vidspec
