// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidspec/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "vidspec/common.hpp"

namespace vidspec {
namespace {

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw PlanError("pruning ratio must lie in [0, 1]");
}

void check_lambda(double lambda_r) {
  if (!(lambda_r >= 0.0 && lambda_r <= 1.0)) throw PlanError("lambda_r must lie in [0, 1]");
}

PruningPlan make_plan(const char* method, const VideoLayout& layout, double ratio, std::vector<std::size_t> keep) {
  std::sort(keep.begin(), keep.end());
  PruningPlan plan;
  plan.method = method;
  plan.ratio = ratio;
  plan.num_video = layout.size();
  plan.retained = keep;
  plan.stage2 = std::move(keep);
  return plan;
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace

WindowAnchor parse_window_anchor(const std::string& name) {
  if (name == "front") return WindowAnchor::kFront;
  if (name == "middle") return WindowAnchor::kMiddle;
  if (name == "end") return WindowAnchor::kEnd;
  throw PlanError("unknown window anchor '" + name + "'");
}

std::string to_string(WindowAnchor anchor) {
  switch (anchor) {
    case WindowAnchor::kFront:
      return "front";
    case WindowAnchor::kMiddle:
      return "middle";
    case WindowAnchor::kEnd:
      return "end";
  }
  return "front";
}

std::vector<std::size_t> stage1_top_p(const GuidanceScores& s, double lambda_r) {
  check_lambda(lambda_r);
  const auto order = descending_order(s.scores);
  // Prefix sums and the total share one summation order.
  double total = 0.0;
  for (auto j : order) total += s.scores[j];
  if (!(total > 0.0)) throw DegenerateGuidanceError("all guidance scores are zero");
  const double target = lambda_r * total;
  std::vector<std::size_t> kept;
  double run = 0.0;
  for (auto j : order) {
    if (run >= target) break;
    run += s.scores[j];
    kept.push_back(j);
  }
  return kept;
}

std::vector<std::size_t> stage2_uniform(const VideoLayout& layout, const std::vector<std::size_t>& stage1,
                                        double ratio) {
  check_ratio(ratio);
  const std::size_t total = layout.size();
  if (stage1.size() > total) throw PlanError("stage I set larger than the video");
  std::vector<bool> taken(total, false);
  for (auto j : stage1) {
    if (j >= total) throw PlanError("stage I index outside layout");
    taken[j] = true;
  }
  std::vector<std::size_t> remaining;
  remaining.reserve(total - stage1.size());
  for (std::size_t j = 0; j < total; ++j) {
    if (!taken[j]) remaining.push_back(j);
  }
  const auto budget = static_cast<std::int64_t>(retained_budget(total, ratio));
  const std::int64_t fill = budget - static_cast<std::int64_t>(stage1.size());
  std::vector<std::size_t> out;
  if (fill <= 0 || remaining.empty()) return out;
  const auto m = static_cast<std::size_t>(remaining.size());
  const auto k_u = std::min(static_cast<std::size_t>(fill), m);
  out.reserve(k_u);
  for (std::size_t k = 0; k < k_u; ++k) out.push_back(remaining[k * m / k_u]);
  return out;
}

PruningPlan plan_two_stage(const GuidanceScores& scores, const VideoLayout& layout, double ratio, double lambda_r) {
  check_ratio(ratio);
  check_lambda(lambda_r);
  if (scores.scores.size() != layout.size()) throw PlanError("guidance score count does not match layout");
  const std::size_t budget = retained_budget(layout.size(), ratio);
  std::vector<std::size_t> top;
  bool fallback = false;
  try {
    top = stage1_top_p(scores, lambda_r);
  } catch (const DegenerateGuidanceError&) {
    std::cerr << "[vidspec] warning: guidance scores are all zero, falling back to uniform pruning\n";
    fallback = true;
  }
  PruningPlan plan;
  plan.method = kMethodTwoStage;
  plan.ratio = ratio;
  plan.lambda_r = lambda_r;
  plan.num_video = layout.size();
  plan.uniform_fallback = fallback;
  if (top.size() > budget) {
    plan.stage1_truncated = top.size() - budget;
    top.resize(budget);
  }
  plan.stage2 = stage2_uniform(layout, top, ratio);
  plan.stage1 = std::move(top);
  std::sort(plan.stage1.begin(), plan.stage1.end());
  plan.retained = plan.stage1;
  plan.retained.insert(plan.retained.end(), plan.stage2.begin(), plan.stage2.end());
  std::sort(plan.retained.begin(), plan.retained.end());
  return plan;
}

PruningPlan plan_stage1_only(const GuidanceScores& scores, const VideoLayout& layout, double ratio,
                             double lambda_r) {
  check_ratio(ratio);
  check_lambda(lambda_r);
  if (scores.scores.size() != layout.size()) throw PlanError("guidance score count does not match layout");
  const std::size_t budget = retained_budget(layout.size(), ratio);
  auto top = stage1_top_p(scores, lambda_r);
  PruningPlan plan;
  plan.method = "stage1_only";
  plan.ratio = ratio;
  plan.lambda_r = lambda_r;
  plan.num_video = layout.size();
  if (top.size() > budget) {
    plan.stage1_truncated = top.size() - budget;
    top.resize(budget);
  }
  std::sort(top.begin(), top.end());
  plan.stage1 = top;
  plan.retained = std::move(top);
  return plan;
}

PruningPlan plan_uniform(const VideoLayout& layout, double ratio) {
  auto plan = make_plan(kMethodUniform, layout, ratio, stage2_uniform(layout, {}, ratio));
  return plan;
}

PruningPlan plan_identity(const VideoLayout& layout) {
  std::vector<std::size_t> all(layout.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_plan(kMethodIdentity, layout, 0.0, std::move(all));
}

PruningPlan plan_random(const VideoLayout& layout, double ratio, std::uint64_t seed) {
  check_ratio(ratio);
  const std::size_t n = layout.size();
  const std::size_t k = retained_budget(n, ratio);
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return make_plan(kMethodRandom, layout, ratio, std::move(pool));
}

PruningPlan plan_window(const VideoLayout& layout, double ratio, WindowAnchor anchor) {
  check_ratio(ratio);
  const std::size_t n = layout.size();
  const std::size_t k = retained_budget(n, ratio);
  std::size_t start = 0;
  if (anchor == WindowAnchor::kMiddle) start = (n - k) / 2;
  if (anchor == WindowAnchor::kEnd) start = n - k;
  std::vector<std::size_t> keep(k);
  std::iota(keep.begin(), keep.end(), start);
  auto plan = make_plan(kMethodWindow, layout, ratio, std::move(keep));
  plan.method += ":" + to_string(anchor);
  return plan;
}

PruningPlan plan_frame_drop(const VideoLayout& layout, double ratio) {
  check_ratio(ratio);
  const std::size_t k = retained_budget(layout.size(), ratio);
  const auto frames = static_cast<std::size_t>(layout.frames);
  // Guard against (1 - r) * F landing a hair above an integer.
  auto kept_frames = static_cast<std::size_t>(std::ceil((1.0 - ratio) * layout.frames - 1e-9));
  kept_frames = std::min(kept_frames, frames);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < kept_frames; ++i) {
    const std::size_t f = i * frames / kept_frames;
    for (std::size_t t = 0; t < layout.tokens_per_frame(); ++t) keep.push_back(f * layout.tokens_per_frame() + t);
  }
  // Kept frames are emitted in increasing order, so trailing tokens belong to the last kept frame.
  if (keep.size() < k) throw PlanError("frame selection fell short of the budget");
  keep.resize(k);
  return make_plan(kMethodFrameDrop, layout, ratio, std::move(keep));
}

PruningPlan plan_temporal_similarity(const std::vector<std::vector<float>>& embeddings, const VideoLayout& layout,
                                     double ratio) {
  check_ratio(ratio);
  const std::size_t n = layout.size();
  if (embeddings.size() != n) throw PlanError("temporal pruning needs one embedding per video token");
  const std::size_t k = retained_budget(n, ratio);
  const std::size_t hw = layout.tokens_per_frame();
  std::vector<double> sim(n, 0.0);
  std::vector<std::size_t> candidates;
  for (std::size_t j = hw; j < n; ++j) {
    sim[j] = cosine(embeddings[j], embeddings[j - hw]);
    candidates.push_back(j);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  std::vector<bool> dropped(n, false);
  std::size_t to_drop = n - k;
  for (std::size_t i = 0; i < candidates.size() && to_drop > 0; ++i, --to_drop) dropped[candidates[i]] = true;
  // Budget below one frame: trim frame 0 from its end.
  for (std::size_t j = hw; j-- > 0 && to_drop > 0; --to_drop) dropped[j] = true;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < n; ++j) {
    if (!dropped[j]) keep.push_back(j);
  }
  return make_plan(kMethodTemporal, layout, ratio, std::move(keep));
}

PruningPlan plan_temporal_similarity(const MultimodalSequence& seq, double ratio) {
  if (seq.pruned) throw PlanError("temporal pruning needs an unpruned sequence");
  std::vector<std::vector<float>> emb;
  emb.reserve(seq.num_video());
  for (std::size_t i = 0; i < seq.num_video(); ++i) emb.push_back(seq.items[i].embedding);
  return plan_temporal_similarity(emb, seq.layout, ratio);
}

MultimodalSequence apply_plan(const MultimodalSequence& seq, const PruningPlan& plan) {
  if (seq.pruned) throw PlanError("plan already applied to this sequence");
  seq.validate();
  if (plan.num_video != seq.layout.size()) {
    throw PlanError("plan covers " + std::to_string(plan.num_video) + " video tokens, layout has " +
                    std::to_string(seq.layout.size()));
  }
  std::vector<bool> keep(seq.layout.size(), false);
  for (std::size_t i = 0; i < plan.retained.size(); ++i) {
    const auto j = plan.retained[i];
    if (j >= seq.layout.size()) throw PlanError("plan index outside layout");
    if (i > 0 && j <= plan.retained[i - 1]) throw PlanError("plan indices must be strictly increasing");
    keep[j] = true;
  }
  MultimodalSequence out;
  out.layout = seq.layout;
  out.pruned = true;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto& item = seq.items[i];
    if (item.modality == Modality::kVideo) {
      const auto flat = seq.video_index[i];
      if (!keep[flat]) continue;
      out.video_index.push_back(flat);
    }
    out.items.push_back(item);
    out.positions.push_back(seq.positions[i]);
  }
  return out;
}

void write_plan(std::ostream& out, const PruningPlan& plan) {
  out.precision(17);
  out << "vidspec-plan 1\n";
  out << "method " << plan.method << '\n';
  out << "ratio " << plan.ratio << '\n';
  out << "lambda_r " << plan.lambda_r << '\n';
  out << "num_video " << plan.num_video << '\n';
  out << "stage1_truncated " << plan.stage1_truncated << '\n';
  out << "uniform_fallback " << (plan.uniform_fallback ? 1 : 0) << '\n';
  out << "indices\n";
  std::size_t s1 = 0;
  for (auto j : plan.retained) {
    out << j;
    if (s1 < plan.stage1.size() && plan.stage1[s1] == j) {
      out << " R";
      ++s1;
    }
    out << '\n';
  }
}

PruningPlan read_plan(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "vidspec-plan 1") throw PlanError("not a vidspec plan");
  PruningPlan plan;
  bool indices = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (!indices) {
      std::string key;
      ls >> key;
      if (key == "method") {
        ls >> plan.method;
      } else if (key == "ratio") {
        ls >> plan.ratio;
      } else if (key == "lambda_r") {
        ls >> plan.lambda_r;
      } else if (key == "num_video") {
        ls >> plan.num_video;
      } else if (key == "stage1_truncated") {
        ls >> plan.stage1_truncated;
      } else if (key == "uniform_fallback") {
        int flag = 0;
        ls >> flag;
        plan.uniform_fallback = flag != 0;
      } else if (key == "indices") {
        indices = true;
        continue;
      } else {
        throw PlanError("unknown plan header line: " + line);
      }
      if (!ls) throw PlanError("malformed plan header line: " + line);
      continue;
    }
    std::size_t j = 0;
    std::string mark;
    if (!(ls >> j)) throw PlanError("malformed plan index line: " + line);
    ls >> mark;
    plan.retained.push_back(j);
    (mark == "R" ? plan.stage1 : plan.stage2).push_back(j);
  }
  if (!indices) throw PlanError("plan lacks an index section");
  for (std::size_t i = 0; i < plan.retained.size(); ++i) {
    if (plan.retained[i] >= plan.num_video || (i > 0 && plan.retained[i] <= plan.retained[i - 1])) {
      throw PlanError("plan indices must be increasing and inside the layout");
    }
  }
  return plan;
}

}  // namespace vidspec
