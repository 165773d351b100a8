// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vidspec/guidance.hpp"
#include "vidspec/model.hpp"
#include "vidspec/pruning.hpp"
#include "vidspec/specdec.hpp"
#include "vidspec/workload.hpp"

namespace vidspec {

inline constexpr int kRunConfigSchemaVersion = 1;
inline constexpr double kLambdaSeparateDraft = 0.4;
inline constexpr double kLambdaSelfDraft = 0.5;

struct PruningSettings {
  // two_stage, stage1_only, uniform, random, window[:front|middle|end],
  // frame_drop, temporal_similarity, identity
  std::string method = kMethodTwoStage;
  double ratio = 0.9;
  double lambda_r = 0.5;
  std::uint64_t seed = 0;
};

// Where prompts come from. "random": noise video and uniform language
// tokens. "planted": PlantedTask samples.
struct WorkloadSettings {
  std::string kind = "random";
  VideoLayout layout{16, 14, 14};
  int n_language = 32;
  std::uint64_t seed = 0;
  PlantedTask task;  // used when kind == "planted"
};

struct ModelSource {
  ModelConfig config;
  std::string checkpoint;  // loaded when non-empty, else init(config)
};

struct RunConfig {
  int schema_version = kRunConfigSchemaVersion;
  ModelSource target;
  std::optional<ModelSource> draft;  // empty = the target drafts for itself
  std::string mode = "sd-chain";     // vanilla | sd-chain | sd-tree
  WorkloadSettings workload;
  PruningSettings pruning;
  std::vector<double> ratios;        // sweep; empty = {pruning.ratio}
  int gamma = 4;
  std::string tree;                  // template path; empty = default tree
  int n_generate = 256;
  int n_prompts = 50;
  std::string output;                // JSON-lines report path; empty = none
  std::string csv_prefix;            // table files <prefix>_*.csv; empty = none
  bool step_records = true;

  void validate() const;
  static RunConfig defaults();  // 8L/d512 target, 2L/d256 draft
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& config);

MultimodalSequence make_prompt(const WorkloadSettings& workload, const ModelConfig& target, int index);
// Builds a plan source; `prompt_index` varies the random pruner's seed.
PlanSource make_plan_source(const PruningSettings& settings, double ratio, int prompt_index);
Model load_or_init(const ModelSource& source);

struct PromptResult {
  int prompt = 0;
  double ratio = 0.0;
  DecodeResult vanilla;
  std::optional<DecodeResult> speculative;
  std::optional<CumulativeProfile> profile;
};

struct Breakdown {
  double target_prefill = 0.0;
  double target_decode = 0.0;
  double draft_prefill = 0.0;
  double draft_decode = 0.0;
  double pruning = 0.0;
  double other = 0.0;  // loop overhead inside the decode phase
  double total = 0.0;
  double component_sum() const {
    return target_prefill + target_decode + draft_prefill + draft_decode + pruning + other;
  }
};

struct RatioSummary {
  std::string method;
  double ratio = 0.0;
  int n_prompts = 0;
  double tau = 1.0;
  double mean_accepted = 0.0;
  double tokens_per_s = 0.0;
  double vanilla_tokens_per_s = 0.0;
  double measured_speedup = 1.0;
  double predicted_speedup = 1.0;
  double t_d = 0.0, t_t = 0.0, t_t_gamma = 0.0;
  int gamma = 0;
  Breakdown breakdown;          // mean per prompt
  Breakdown vanilla_breakdown;  // mean per prompt
  std::vector<double> tau_by_step;  // mean (accepted + 1) at step index k
  std::vector<std::pair<double, double>> profile;  // mean cumulative profile
};

struct BenchmarkReport {
  std::string mode;
  std::vector<RatioSummary> summaries;
  std::vector<PromptResult> prompts;
};

// Throws LosslessnessViolation naming the first differing token.
void verify_lossless(const std::vector<int>& vanilla, const std::vector<int>& speculative, int prompt, double ratio);

// Runs vanilla then the configured mode for every prompt and ratio. Throws
// LosslessnessViolation if any speculative output differs from vanilla.
BenchmarkReport bench(const RunConfig& config);
BenchmarkReport bench(const RunConfig& config, const Model& target, const Model* draft);

void write_report_jsonl(std::ostream& out, const BenchmarkReport& report, bool step_records);
void write_summary_csv(std::ostream& out, const std::vector<RatioSummary>& summaries);
void write_breakdown_csv(std::ostream& out, const std::vector<RatioSummary>& summaries);
void write_step_csv(std::ostream& out, const std::vector<RatioSummary>& summaries);
void write_profile_csv(std::ostream& out, const std::vector<RatioSummary>& summaries);
// Writes whatever the config's output and csv_prefix ask for.
void emit_report(const RunConfig& config, const BenchmarkReport& report);

struct AblationRow {
  std::string variant;
  RatioSummary summary;
  double delta_tau = 0.0;  // tau(variant) - tau(full)
};

// Default variants: full, stage1_only, stage2_only, random, window:front,
// window:middle, window:end, frame_drop, temporal_similarity.
std::vector<std::string> default_ablation_variants();
std::vector<AblationRow> ablate(const RunConfig& config, const Model& target, const Model* draft,
                                const std::vector<std::string>& variants);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);
void write_ablation_jsonl(std::ostream& out, const std::vector<AblationRow>& rows);

struct LatencyRow {
  std::size_t length = 0;
  double mean_ms = 0.0;  // per decoded token, median over repeats
};

// Mean per-token decode latency after staging `length` synthetic cache
// slots; `steps` decodes per measurement.
std::vector<LatencyRow> latency_sweep(const Model& model, const std::vector<std::size_t>& lengths, int steps = 100,
                                      int repeats = 3);
void write_latency_csv(std::ostream& out, const std::vector<LatencyRow>& rows);

// Sequence files (JSON) used by the CLI.
void write_sequence(std::ostream& out, const MultimodalSequence& seq);
MultimodalSequence read_sequence(std::istream& in);

}  // namespace vidspec
