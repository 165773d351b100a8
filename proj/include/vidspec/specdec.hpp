// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vidspec/model.hpp"
#include "vidspec/pruning.hpp"
#include "vidspec/sequence.hpp"

namespace vidspec {

// Static draft tree. Node i takes the rank-th most likely token of its
// parent's draft distribution (parent -1 is the root, i.e. the distribution
// after the last committed token). Parents precede children.
class TreeTemplate {
 public:
  struct Node {
    int parent = -1;
    int rank = 0;
    bool operator==(const Node&) const = default;
  };

  TreeTemplate() = default;
  explicit TreeTemplate(std::vector<Node> nodes);

  // Linear chain of `depth` rank-0 nodes.
  static TreeTemplate chain(int depth);
  // Greedy expansion: at each depth, pick `counts[d]` children with the
  // smallest accumulated rank along their path (ties: earlier parent, lower rank).
  static TreeTemplate expand(const std::vector<int>& counts_per_depth);
  // expand({4, 8, 8, 4, 2})
  static TreeTemplate default_tree();

  static TreeTemplate parse(std::istream& in);
  static TreeTemplate load(const std::string& path);
  void write(std::ostream& out) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  int depth(std::size_t node) const { return depth_[node]; }
  int max_depth() const { return max_depth_; }
  int max_rank() const;
  const std::vector<int>& children(int node) const;  // node -1 = root
  bool has_children(std::size_t node) const { return !children_[node + 1].empty(); }
  bool operator==(const TreeTemplate& o) const { return nodes_ == o.nodes_; }

 private:
  std::vector<Node> nodes_;
  std::vector<int> depth_;  // root children have depth 1
  std::vector<std::vector<int>> children_;  // index 0 = root
  int max_depth_ = 0;
};

struct StepStats {
  int step_index = 0;
  int accepted = 0;           // accepted draft tokens, bonus excluded
  double draft_time = 0.0;    // seconds
  double verify_time = 0.0;   // seconds
  double step_time = 0.0;     // wall time of the whole step
};

struct Metrics {
  double tau = 1.0;  // accepted + 1, averaged over steps
  double mean_accepted = 0.0;
  double tokens_per_s = 0.0;
  double measured_speedup = 1.0;
  double predicted_speedup = 1.0;
  double t_d = 0.0;
  double t_t = 0.0;
  double t_t_gamma = 0.0;
  int gamma = 0;
};

// tau / (gamma * t_d / t_t + t_t_gamma / t_t)
double predicted_speedup(double tau, int gamma, double t_d, double t_t, double t_t_gamma);

// `vanilla_t_t` is the target's mean per-token decode latency. For trees,
// `gamma` is the tree depth.
Metrics compute_metrics(const std::vector<StepStats>& stats, double vanilla_t_t, int gamma);

struct RunTimings {
  double target_prefill = 0.0;
  double pruning = 0.0;  // guidance extraction + plan construction
  double draft_prefill = 0.0;
  double decode = 0.0;
  double total = 0.0;
};

struct DecodeResult {
  std::vector<int> tokens;
  std::vector<StepStats> steps;
  Metrics metrics;
  RunTimings timings;
  std::optional<PruningPlan> plan;
};

DecodeResult run_vanilla(const Model& target, const MultimodalSequence& prompt, int n);

enum class DraftShape { kChain, kTree };

struct SpeculativeOptions {
  DraftShape shape = DraftShape::kChain;
  int gamma = 4;
  TreeTemplate tree;
  // Target mean decode latency used for the metrics; <= 0 leaves the
  // speedup fields at their defaults.
  double vanilla_t_t = 0.0;
};

// Builds the draft's pruning plan from the target's prefill. Receives the
// attention capture when `needs_capture` was requested.
struct PlanSource {
  std::function<PruningPlan(const MultimodalSequence&, const AttentionCapture*)> build;
  bool needs_capture = false;

  static PlanSource fixed(PruningPlan plan);
};

// Draft/verify loop with greedy acceptance. `draft` may be the target itself
// (self-speculation over a pruned cache) or a smaller model sharing the
// vocabulary. The output always equals run_vanilla(target, prompt, n).
DecodeResult run_speculative(const Model& target, const Model& draft, const MultimodalSequence& prompt,
                             const PlanSource& plan, const SpeculativeOptions& options, int n);

DecodeResult run_sd_chain(const Model& target, const Model& draft, const MultimodalSequence& prompt,
                          const PruningPlan& plan, int gamma, int n);
DecodeResult run_sd_tree(const Model& target, const Model& draft, const MultimodalSequence& prompt,
                         const PruningPlan& plan, const TreeTemplate& tree, int n);

// Indices of the `count` largest logits, descending, ties by lower id.
std::vector<int> top_tokens(std::span<const float> logits, std::size_t count);

}  // namespace vidspec
