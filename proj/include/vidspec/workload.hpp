// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "vidspec/sequence.hpp"

namespace vidspec {

struct WorkloadSpec {
  VideoLayout layout{16, 14, 14};
  int n_language_tokens = 32;
  int video_dim = 64;
  int vocab_size = 256;
  // Flat video indices that carry the signal of `pattern`.
  std::vector<std::size_t> planted;
  int pattern = 0;
  std::uint64_t embedding_seed = 0;
  std::uint64_t query_seed = 0;
  // Expected norm of each video item's noise.
  double noise_scale = 1.0;

  void validate() const;
};

// Video items are Gaussian noise of norm ~noise_scale; planted items add the
// unit basis vector e_pattern on top.
MultimodalSequence gen_workload(const WorkloadSpec& spec);

// Planted-retrieval task: every prompt plants one of `n_patterns` signals at
// `n_planted` random video positions, and each pattern owns a permutation of
// the vocabulary. Prompt tokens are i.i.d.; the expected continuation is the
// chain t -> succ[t] from the last prompt token. Training targets every
// language row with succ[current token], so the earlier tokens never reveal
// the pattern and the video is the only source for it.
struct PlantedTask {
  VideoLayout layout{4, 4, 4};
  int video_dim = 16;
  int vocab_size = 64;
  int n_patterns = 8;
  int n_planted = 4;
  double noise_scale = 0.5;
  int n_query = 8;         // language tokens in a prompt
  int n_continuation = 24; // tokens generated after the prompt
  std::uint64_t seed = 1;

  void validate() const;
  // Permutation of the vocabulary belonging to each pattern.
  std::vector<std::vector<int>> successors() const;

  struct Sample {
    MultimodalSequence prompt;
    WorkloadSpec spec;
    std::vector<int> continuation;  // expected tokens after the prompt
  };
  // `language_tokens` overrides the prompt length (0 = n_query).
  Sample sample(std::uint64_t sample_seed, int language_tokens = 0) const;
};

}  // namespace vidspec
