// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "test_util.hpp"
#include "vidspec/common.hpp"
#include "vidspec/guidance.hpp"

namespace vidspec {
namespace {

// Sequence with `n_video` video items (layout 1 x 1 x n_video) and `n_lang` language items.
MultimodalSequence tagged_sequence(int n_video, int n_lang) {
  std::vector<std::vector<float>> video(n_video, std::vector<float>(4, 0.0f));
  return MultimodalSequence::build({1, 1, n_video}, std::move(video), std::vector<int>(n_lang, 0));
}

AttentionCapture blank_capture(int layers, int heads, std::size_t n) {
  AttentionCapture c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.seq_len = n;
  c.first_row = 0;
  c.probs.assign(static_cast<std::size_t>(layers) * heads * n * n, 0.0f);
  return c;
}

float& cell(AttentionCapture& c, int l, int h, std::size_t i, std::size_t j) {
  return c.probs[((static_cast<std::size_t>(l) * c.n_heads + h) * c.rows() + (i - c.first_row)) * c.seq_len + j];
}

GuidanceMatrix matrix(std::size_t rows, std::size_t cols, std::vector<double> entries) {
  GuidanceMatrix g;
  g.rows = rows;
  g.cols = cols;
  g.entries = std::move(entries);
  g.video_index.resize(cols);
  std::iota(g.video_index.begin(), g.video_index.end(), std::size_t{0});
  g.num_video = cols;
  return g;
}

TEST(ExtractGuidance, SingleLayerHeadIsRawSubmatrix) {
  auto seq = tagged_sequence(3, 2);
  auto cap = blank_capture(1, 1, 5);
  float v = 0.01f;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j <= i; ++j) cell(cap, 0, 0, i, j) = (v += 0.01f);
  auto g = extract_guidance(cap, seq);
  ASSERT_EQ(g.rows, 2u);
  ASSERT_EQ(g.cols, 3u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g.at(i, j), static_cast<double>(cap.at(0, 0, 3 + i, j)));
}

TEST(ExtractGuidance, AveragesAcrossLayers) {
  auto seq = tagged_sequence(2, 1);
  auto cap = blank_capture(2, 1, 3);
  cell(cap, 0, 0, 2, 0) = 0.2f;
  cell(cap, 0, 0, 2, 1) = 0.8f;
  cell(cap, 1, 0, 2, 0) = 0.4f;
  cell(cap, 1, 0, 2, 1) = 0.6f;
  auto g = extract_guidance(cap, seq);
  EXPECT_NEAR(g.at(0, 0), 0.3, 1e-7);
  EXPECT_NEAR(g.at(0, 1), 0.7, 1e-7);
}

TEST(ExtractGuidance, LayerWeightHookDefaultsToUniform) {
  auto seq = tagged_sequence(2, 1);
  auto cap = blank_capture(2, 1, 3);
  cell(cap, 0, 0, 2, 0) = 0.2f;
  cell(cap, 1, 0, 2, 0) = 0.4f;
  auto uniform = extract_guidance(cap, seq, std::vector<double>{1.0, 1.0});
  EXPECT_EQ(uniform.entries, extract_guidance(cap, seq).entries);
  auto last_only = extract_guidance(cap, seq, std::vector<double>{0.0, 2.0});
  EXPECT_NEAR(last_only.at(0, 0), 0.4, 1e-7);
}

TEST(ExtractGuidance, RejectsMissingLanguageAndLengthMismatch) {
  auto video_only = tagged_sequence(3, 0);
  EXPECT_THROW(extract_guidance(blank_capture(1, 1, 3), video_only), ShapeError);
  EXPECT_THROW(extract_guidance(blank_capture(1, 1, 4), tagged_sequence(3, 2)), ShapeError);
}

TEST(ExtractGuidance, RowsSumToAtMostOneOnRealCapture) {
  Model m = Model::init(testing::small_config());
  auto seq = testing::random_sequence({2, 3, 3}, 6, 32, 64, 4);
  auto r = m.prefill(seq, true, seq.num_video());
  auto g = extract_guidance(*r.capture, seq);
  for (std::size_t i = 0; i < g.rows; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < g.cols; ++j) {
      EXPECT_GE(g.at(i, j), 0.0);
      sum += g.at(i, j);
    }
    EXPECT_LE(sum, 1.0 + 1e-6);
  }
  auto s = score_tokens(g);
  EXPECT_LE(std::accumulate(s.scores.begin(), s.scores.end(), 0.0), 1.0 + 1e-6);
}

TEST(ScoreTokens, ColumnMean) {
  auto s = score_tokens(matrix(2, 2, {0.1, 0.9, 0.3, 0.7}));
  EXPECT_NEAR(s.scores[0], 0.2, 1e-12);
  EXPECT_NEAR(s.scores[1], 0.8, 1e-12);
}

TEST(ScoreTokens, SingleRowIsThatRow) {
  auto s = score_tokens(matrix(1, 3, {0.25, 0.5, 0.125}));
  EXPECT_EQ(s.scores, (std::vector<double>{0.25, 0.5, 0.125}));
}

TEST(ScoreTokens, SymmetricRows) {
  auto s = score_tokens(matrix(3, 4, std::vector<double>(12, 0.2)));
  for (double a : s.scores) EXPECT_NEAR(a, 0.2, 1e-15);
}

TEST(ScoreTokens, AgreesWithNaiveDoubleLoop) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 0.05);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng() % 12, cols = 1 + rng() % 40;
    std::vector<double> e(rows * cols);
    for (auto& x : e) x = u(rng);
    auto s = score_tokens(matrix(rows, cols, e));
    for (std::size_t j = 0; j < cols; ++j) {
      long double acc = 0;
      for (std::size_t i = 0; i < rows; ++i) acc += e[i * cols + j];
      EXPECT_NEAR(s.scores[j], static_cast<double>(acc / rows), 1e-12);
    }
  }
}

TEST(ScoreTokens, PermutationEquivariantAndScaleCovariant) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 0.05);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng() % 6, cols = 2 + rng() % 30;
    std::vector<double> e(rows * cols);
    for (auto& x : e) x = u(rng);
    std::vector<std::size_t> perm(cols);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> permuted(rows * cols), scaled(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        permuted[i * cols + perm[j]] = e[i * cols + j];
        scaled[i * cols + j] = 4.0 * e[i * cols + j];
      }
    auto a = score_tokens(matrix(rows, cols, e));
    auto b = score_tokens(matrix(rows, cols, permuted));
    auto c = score_tokens(matrix(rows, cols, scaled));
    for (std::size_t j = 0; j < cols; ++j) {
      EXPECT_EQ(b.scores[perm[j]], a.scores[j]);
      EXPECT_EQ(c.scores[j], 4.0 * a.scores[j]);
    }
    EXPECT_EQ(descending_order(a.scores), descending_order(c.scores));
  }
}

TEST(CumulativeProfile, HandComputedPoints) {
  auto p = cumulative_profile({{0.5, 0.3, 0.2}});
  ASSERT_EQ(p.points.size(), 4u);
  EXPECT_EQ(p.points[0], std::make_pair(0.0, 0.0));
  EXPECT_NEAR(p.points[1].first, 1.0 / 3, 1e-15);
  EXPECT_NEAR(p.points[1].second, 0.5, 1e-15);
  EXPECT_NEAR(p.points[2].first, 2.0 / 3, 1e-15);
  EXPECT_NEAR(p.points[2].second, 0.8, 1e-15);
  EXPECT_EQ(p.points[3], std::make_pair(1.0, 1.0));
}

TEST(CumulativeProfile, UniformIsDiagonal) {
  auto p = cumulative_profile({std::vector<double>(7, 0.1)});
  for (auto [x, y] : p.points) EXPECT_NEAR(x, y, 1e-12);
}

TEST(CumulativeProfile, OneHotJumpsImmediately) {
  auto p = cumulative_profile({{0.0, 0.0, 0.9, 0.0}});
  EXPECT_EQ(p.order.front(), 2u);
  for (std::size_t k = 1; k < p.points.size(); ++k) EXPECT_EQ(p.points[k].second, 1.0);
}

TEST(CumulativeProfile, TiesBreakByAscendingIndex) {
  auto p = cumulative_profile({{0.1, 0.3, 0.1, 0.3}});
  EXPECT_EQ(p.order, (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(CumulativeProfile, AllZeroIsDegenerate) {
  EXPECT_THROW(cumulative_profile({{0.0, 0.0}}), DegenerateGuidanceError);
}

}  // namespace
}  // namespace vidspec
