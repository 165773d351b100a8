// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vidspec/guidance.hpp"
#include "vidspec/sequence.hpp"

namespace vidspec {

inline constexpr const char* kMethodTwoStage = "two_stage";
inline constexpr const char* kMethodUniform = "uniform";
inline constexpr const char* kMethodRandom = "random";
inline constexpr const char* kMethodWindow = "window";
inline constexpr const char* kMethodFrameDrop = "frame_drop";
inline constexpr const char* kMethodTemporal = "temporal_similarity";
inline constexpr const char* kMethodIdentity = "identity";

// Which video tokens the draft keeps. `stage1` holds the attention-selected
// tokens (Top-P), `stage2` the spatially uniform fill; other methods put
// everything in `stage2`.
struct PruningPlan {
  std::string method;
  double ratio = 0.0;
  double lambda_r = 0.0;
  std::size_t num_video = 0;
  std::vector<std::size_t> retained;  // ascending
  std::vector<std::size_t> stage1;    // ascending
  std::vector<std::size_t> stage2;    // ascending
  // Stage I members dropped because the Top-P set exceeded the budget.
  std::size_t stage1_truncated = 0;
  // All-zero guidance: the plan is the uniform one.
  bool uniform_fallback = false;

  bool operator==(const PruningPlan&) const = default;
};

enum class WindowAnchor { kFront, kMiddle, kEnd };

WindowAnchor parse_window_anchor(const std::string& name);
std::string to_string(WindowAnchor anchor);

// Minimal descending-score prefix whose sum reaches lambda_r of the total.
// Returned in descending-score order.
std::vector<std::size_t> stage1_top_p(const GuidanceScores& scores, double lambda_r);

// Evenly spaced fill over the tokens not in `stage1`, up to the budget.
std::vector<std::size_t> stage2_uniform(const VideoLayout& layout, const std::vector<std::size_t>& stage1,
                                        double ratio);

PruningPlan plan_two_stage(const GuidanceScores& scores, const VideoLayout& layout, double ratio, double lambda_r);
PruningPlan plan_uniform(const VideoLayout& layout, double ratio);
PruningPlan plan_identity(const VideoLayout& layout);
PruningPlan plan_random(const VideoLayout& layout, double ratio, std::uint64_t seed);
PruningPlan plan_window(const VideoLayout& layout, double ratio, WindowAnchor anchor);
PruningPlan plan_frame_drop(const VideoLayout& layout, double ratio);
// `embeddings` holds the video items in flat order (an unpruned sequence's video).
PruningPlan plan_temporal_similarity(const std::vector<std::vector<float>>& embeddings, const VideoLayout& layout,
                                     double ratio);
PruningPlan plan_temporal_similarity(const MultimodalSequence& seq, double ratio);

// Stage I only: Top-P set truncated to the budget, no spatial fill. The
// retained count may fall short of the budget.
PruningPlan plan_stage1_only(const GuidanceScores& scores, const VideoLayout& layout, double ratio,
                             double lambda_r);

// Drops video items not in the plan; kept items keep embeddings and positions.
MultimodalSequence apply_plan(const MultimodalSequence& seq, const PruningPlan& plan);

// Line-based text form:
//   vidspec-plan 1
//   method <name>
//   ratio <r>
//   lambda_r <l>
//   num_video <n>
//   stage1_truncated <k>
//   uniform_fallback <0|1>
//   indices
//   <index> [R]       one per retained token, R marks Stage I members
void write_plan(std::ostream& out, const PruningPlan& plan);
PruningPlan read_plan(std::istream& in);

}  // namespace vidspec
