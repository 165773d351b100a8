// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "vidspec/model.hpp"
#include "vidspec/sequence.hpp"

namespace vidspec {

// Language-query x video-key attention, averaged over layers and heads.
struct GuidanceMatrix {
  std::size_t rows = 0;  // language queries
  std::size_t cols = 0;  // video keys
  std::vector<double> entries;
  std::vector<std::size_t> video_index;  // flat layout index of each column
  std::size_t num_video = 0;             // layout size

  double at(std::size_t i, std::size_t j) const { return entries[i * cols + j]; }
};

// Per-video-token score, indexed by flat layout index.
struct GuidanceScores {
  std::vector<double> scores;
};

// (fraction of tokens, fraction of total attention) for tokens sorted by
// descending score. The first point is (0, 0) and the last is (1, 1).
struct CumulativeProfile {
  std::vector<std::pair<double, double>> points;
  std::vector<std::size_t> order;  // flat indices, descending score
};

// `layer_weights`, when given, weights each layer's contribution (normalized
// to sum 1); heads are always averaged uniformly.
GuidanceMatrix extract_guidance(const AttentionCapture& capture, const MultimodalSequence& seq,
                                const std::optional<std::vector<double>>& layer_weights = std::nullopt);

GuidanceScores score_tokens(const GuidanceMatrix& guidance);

// Descending score, ties by ascending index.
std::vector<std::size_t> descending_order(const std::vector<double>& scores);

CumulativeProfile cumulative_profile(const GuidanceScores& scores);

}  // namespace vidspec
