// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vidspec/model.hpp"
#include "vidspec/workload.hpp"

namespace vidspec {

// Small next-token trainer for the planted-retrieval task. Runs in double
// precision with hand-written gradients; only meant for toy sizes.
struct TrainConfig {
  PlantedTask task;
  int steps = 1200;
  int batch = 8;
  double lr = 3e-3;
  double grad_clip = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Model geometry used by the shipped recipe.
ModelConfig toy_model_config(const PlantedTask& task, std::uint64_t seed = 1);

// One training sequence; targets[i] is the token row i must predict, or -1.
struct TrainExample {
  MultimodalSequence sequence;
  std::vector<int> targets;
};

// i.i.d. language tokens; every language row targets the pattern's
// successor of its own token.
TrainExample make_example(const PlantedTask& task, std::uint64_t sample_seed);

// Parameters in ModelWeights::tensors order.
using ParamSet = std::vector<std::vector<double>>;
ParamSet to_params(const ModelConfig& config, const ModelWeights& weights);
ModelWeights from_params(const ModelConfig& config, const ParamSet& params);

// Mean cross-entropy over target rows. Writes d(loss)/d(params) into `grad`
// (resized and overwritten) when non-null.
double loss_and_gradient(const ModelConfig& config, const ParamSet& params, const TrainExample& example,
                         ParamSet* grad);

struct TrainResult {
  Model model;
  std::vector<double> losses;  // mean batch loss per step
};

// Throws TrainingDivergence on a non-finite loss.
TrainResult train_toy(const Model& model, const TrainConfig& config,
                      const std::function<void(int step, double loss)>& on_step = {});

// Mean guidance score on planted tokens divided by the mean on the rest,
// over `n_prompts` held-out prompts.
double planted_guidance_ratio(const Model& model, const PlantedTask& task, int n_prompts,
                              std::uint64_t first_seed = 1000000);

}  // namespace vidspec
