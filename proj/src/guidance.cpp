// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidspec/guidance.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "vidspec/common.hpp"

namespace vidspec {

GuidanceMatrix extract_guidance(const AttentionCapture& capture, const MultimodalSequence& seq,
                                const std::optional<std::vector<double>>& layer_weights) {
  if (capture.seq_len != seq.size()) {
    throw ShapeError("attention capture covers " + std::to_string(capture.seq_len) + " items, sequence has " +
                     std::to_string(seq.size()));
  }
  std::vector<std::size_t> language_rows, video_cols;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    (seq.items[i].modality == Modality::kLanguage ? language_rows : video_cols).push_back(i);
  }
  if (language_rows.empty()) throw ShapeError("guidance needs at least one language query");
  if (language_rows.front() < capture.first_row) throw ShapeError("capture does not cover the language rows");

  std::vector<double> weights(capture.n_layers, 1.0 / capture.n_layers);
  if (layer_weights) {
    if (layer_weights->size() != static_cast<std::size_t>(capture.n_layers)) {
      throw ShapeError("layer weight count does not match capture");
    }
    const double total = std::accumulate(layer_weights->begin(), layer_weights->end(), 0.0);
    if (!(total > 0.0)) throw ConfigError("layer weights must have a positive sum");
    for (int l = 0; l < capture.n_layers; ++l) weights[l] = (*layer_weights)[l] / total;
  }

  GuidanceMatrix g;
  g.rows = language_rows.size();
  g.cols = video_cols.size();
  g.entries.assign(g.rows * g.cols, 0.0);
  g.video_index = seq.video_index;
  g.num_video = seq.layout.size();
  for (int l = 0; l < capture.n_layers; ++l) {
    const double scale = weights[l] / capture.n_heads;
    for (int h = 0; h < capture.n_heads; ++h) {
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) {
          g.entries[i * g.cols + j] += scale * capture.at(l, h, language_rows[i], video_cols[j]);
        }
      }
    }
  }
  return g;
}

GuidanceScores score_tokens(const GuidanceMatrix& g) {
  if (g.rows == 0) throw ShapeError("guidance matrix has no language rows");
  if (g.entries.size() != g.rows * g.cols || g.video_index.size() != g.cols) {
    throw ShapeError("guidance matrix shape is inconsistent");
  }
  GuidanceScores out;
  out.scores.assign(std::max(g.num_video, g.cols), 0.0);
  for (std::size_t j = 0; j < g.cols; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < g.rows; ++i) sum += g.at(i, j);
    out.scores[g.video_index[j]] = sum / static_cast<double>(g.rows);
  }
  return out;
}

std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

CumulativeProfile cumulative_profile(const GuidanceScores& s) {
  CumulativeProfile p;
  p.order = descending_order(s.scores);
  // The total is the final running sum in sorted order, so the last point is exactly 1.
  std::vector<double> cum(p.order.size());
  double run = 0.0;
  for (std::size_t k = 0; k < p.order.size(); ++k) {
    if (s.scores[p.order[k]] < 0.0) throw DegenerateGuidanceError("guidance scores must be non-negative");
    run += s.scores[p.order[k]];
    cum[k] = run;
  }
  if (!(run > 0.0)) throw DegenerateGuidanceError("cumulative profile of all-zero scores is undefined");
  const double n = static_cast<double>(p.order.size());
  p.points.reserve(p.order.size() + 1);
  p.points.emplace_back(0.0, 0.0);
  for (std::size_t k = 0; k < cum.size(); ++k) {
    p.points.emplace_back(static_cast<double>(k + 1) / n, cum[k] / run);
  }
  return p;
}

}  // namespace vidspec
