// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "vidspec/common.hpp"
#include "vidspec/harness.hpp"

namespace vidspec {
namespace {

RunConfig small_run(const std::string& mode = "sd-chain") {
  RunConfig rc = RunConfig::defaults();
  for (auto* m : {&rc.target.config, &rc.draft->config}) {
    m->n_layers = m == &rc.target.config ? 2 : 1;
    m->n_heads = 2;
    m->d_model = 16;
    m->vocab_size = 32;
    m->video_dim = 8;
    m->max_positions = 512;
  }
  rc.mode = mode;
  rc.workload.layout = {3, 3, 3};
  rc.workload.n_language = 5;
  rc.n_generate = 20;
  rc.n_prompts = 3;
  return rc;
}

TEST(Workload, DeterministicAndSized) {
  WorkloadSpec s;
  s.layout = {4, 14, 14};
  s.n_language_tokens = 32;
  s.video_dim = 8;
  s.planted = {0, 5, 700};
  s.embedding_seed = 3;
  s.query_seed = 4;
  const auto a = gen_workload(s);
  EXPECT_EQ(a.size(), 816u);
  EXPECT_EQ(a, gen_workload(s));
  s.query_seed = 5;
  EXPECT_NE(a, gen_workload(s));
}

TEST(Workload, PlantedAddsUnitSignal) {
  WorkloadSpec s;
  s.layout = {2, 3, 3};
  s.video_dim = 8;
  s.n_language_tokens = 2;
  s.embedding_seed = 11;
  const auto noise = gen_workload(s);
  s.planted = {1, 7};
  s.pattern = 3;
  const auto planted = gen_workload(s);
  for (std::size_t i = 0; i < s.layout.size(); ++i) {
    for (int k = 0; k < s.video_dim; ++k) {
      const float delta = planted.items[i].embedding[k] - noise.items[i].embedding[k];
      const bool hit = (i == 1 || i == 7) && k == 3;
      EXPECT_FLOAT_EQ(delta, hit ? 1.0f : 0.0f);
    }
  }
}

TEST(Workload, RejectsBadSpecs) {
  WorkloadSpec s;
  s.layout = {1, 2, 2};
  s.planted = {4};
  EXPECT_THROW(gen_workload(s), ConfigError);
  s.planted = {};
  s.n_language_tokens = 0;
  EXPECT_THROW(gen_workload(s), ConfigError);
}

TEST(Workload, PlantedTaskContinuationIsTheChain) {
  PlantedTask t;
  const auto succ = t.successors();
  ASSERT_EQ(succ.size(), static_cast<std::size_t>(t.n_patterns));
  for (const auto& p : succ) EXPECT_EQ(std::set<int>(p.begin(), p.end()).size(), p.size());
  const auto s = t.sample(42);
  EXPECT_EQ(s.prompt.num_language(), static_cast<std::size_t>(t.n_query));
  EXPECT_EQ(s.spec.planted.size(), static_cast<std::size_t>(t.n_planted));
  int prev = s.prompt.items.back().token;
  for (int tok : s.continuation) {
    EXPECT_EQ(tok, succ[s.spec.pattern][prev]);
    prev = tok;
  }
}

TEST(RunConfigTest, ParsesAndRoundTrips) {
  auto rc = parse_run_config(R"({"schema_version": 1, "mode": "sd-tree", "draft": "self",
      "pruning": {"method": "random", "ratio": 0.5, "seed": 3}, "ratios": [0, 0.5], "n_prompts": 4})");
  EXPECT_EQ(rc.mode, "sd-tree");
  EXPECT_FALSE(rc.draft.has_value());
  EXPECT_EQ(rc.pruning.method, "random");
  EXPECT_EQ(rc.ratios, (std::vector<double>{0, 0.5}));
  EXPECT_EQ(rc.n_generate, 256);
  EXPECT_EQ(rc.target.config.n_layers, 8);
  const auto again = parse_run_config(dump_run_config(rc));
  EXPECT_EQ(dump_run_config(again), dump_run_config(rc));
}

TEST(RunConfigTest, LambdaDefaultFollowsDraftKind) {
  EXPECT_DOUBLE_EQ(parse_run_config(R"({"schema_version": 1})").pruning.lambda_r, 0.4);
  EXPECT_DOUBLE_EQ(parse_run_config(R"({"schema_version": 1, "draft": "self"})").pruning.lambda_r, 0.5);
  EXPECT_DOUBLE_EQ(
      parse_run_config(R"({"schema_version": 1, "draft": "self", "pruning": {"lambda_r": 0.2}})").pruning.lambda_r,
      0.2);
}

TEST(RunConfigTest, RejectsBadConfigs) {
  EXPECT_THROW(parse_run_config(R"({"mode": "sd-chain"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"schema_version": 2})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"schema_version": 1, "bogus": 1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"schema_version": 1, "mode": "beam"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"schema_version": 1, "pruning": {"ratio": 1.5}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"schema_version": 1, "n_generate": 0})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"schema_version": 1, "draft": "other"})"), ConfigError);
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
}

TEST(Bench, VanillaModeHasUnitSpeedup) {
  auto rc = small_run("vanilla");
  const auto report = bench(rc);
  ASSERT_EQ(report.summaries.size(), 1u);
  EXPECT_DOUBLE_EQ(report.summaries[0].tau, 1.0);
  EXPECT_DOUBLE_EQ(report.summaries[0].measured_speedup, 1.0);
  EXPECT_EQ(report.prompts.size(), 3u);
}

TEST(Bench, SelfDraftWithoutPruningAcceptsEverything) {
  auto rc = small_run();
  rc.draft.reset();
  rc.pruning.ratio = 0.0;
  const auto report = bench(rc);
  EXPECT_DOUBLE_EQ(report.summaries[0].tau, rc.gamma + 1.0);
}

TEST(Bench, SweepEmitsOneSummaryPerRatioAndIsReproducible) {
  auto rc = small_run("sd-tree");
  rc.ratios = {0.0, 0.3, 0.5, 0.7, 0.9, 1.0};
  const auto a = bench(rc);
  const auto b = bench(rc);
  ASSERT_EQ(a.summaries.size(), 6u);
  for (std::size_t i = 0; i < a.summaries.size(); ++i) {
    EXPECT_DOUBLE_EQ(a.summaries[i].ratio, rc.ratios[i]);
    EXPECT_DOUBLE_EQ(a.summaries[i].tau, b.summaries[i].tau);
    EXPECT_GE(a.summaries[i].tau, 1.0);
    EXPECT_FALSE(a.summaries[i].profile.empty());
    EXPECT_DOUBLE_EQ(a.summaries[i].profile.back().second, 1.0);
  }
  for (std::size_t i = 0; i < a.prompts.size(); ++i) {
    EXPECT_EQ(a.prompts[i].speculative->tokens, b.prompts[i].speculative->tokens);
    EXPECT_EQ(a.prompts[i].speculative->tokens.size(), static_cast<std::size_t>(rc.n_generate));
  }
}

TEST(Bench, BreakdownAccountsForTotal) {
  auto rc = small_run();
  rc.n_generate = 64;
  const auto r = bench(rc);
  const auto& b = r.summaries[0].breakdown;
  EXPECT_NEAR(b.component_sum(), b.total, 0.05 * b.total);
  EXPECT_GE(b.other, -1e-9);
  const double named = b.target_prefill + b.target_decode + b.draft_prefill + b.draft_decode + b.pruning;
  EXPECT_NEAR(named, b.total, 0.05 * b.total);
}

TEST(Bench, PredictedSpeedupRecomputes) {
  auto rc = small_run();
  const auto s = bench(rc).summaries[0];
  EXPECT_NEAR(predicted_speedup(s.tau, s.gamma, s.t_d, s.t_t, s.t_t_gamma), s.predicted_speedup, 1e-12);
}

TEST(Bench, ReportFormats) {
  auto rc = small_run();
  const auto r = bench(rc);
  std::ostringstream jl;
  write_report_jsonl(jl, r, true);
  std::istringstream lines(jl.str());
  std::string line;
  int steps = 0, summaries = 0, prompts = 0;
  while (std::getline(lines, line)) {
    if (line.find("\"type\":\"step\"") != std::string::npos) ++steps;
    if (line.find("\"type\":\"summary\"") != std::string::npos) ++summaries;
    if (line.find("\"type\":\"prompt\"") != std::string::npos) ++prompts;
  }
  std::size_t expected_steps = 0;
  for (const auto& p : r.prompts) expected_steps += p.speculative->steps.size();
  EXPECT_EQ(steps, static_cast<int>(expected_steps));
  EXPECT_EQ(summaries, 1);
  EXPECT_EQ(prompts, 3);
  std::ostringstream csv;
  write_summary_csv(csv, r.summaries);
  EXPECT_EQ(csv.str().rfind("method,ratio,", 0), 0u);
}

TEST(Bench, LosslessCheckThrows) {
  EXPECT_NO_THROW(verify_lossless({1, 2, 3}, {1, 2, 3}, 0, 0.5));
  EXPECT_THROW(verify_lossless({1, 2, 3}, {1, 2, 4}, 0, 0.5), LosslessnessViolation);
}

TEST(Bench, PlanSourcesHonourBudget) {
  const VideoLayout layout{3, 3, 3};
  for (const std::string m : {"uniform", "random", "window:front", "window:middle", "window:end", "frame_drop",
                              "temporal_similarity"}) {
    PruningSettings s;
    s.method = m;
    const auto src = make_plan_source(s, 0.4, 2);
    EXPECT_FALSE(src.needs_capture);
    WorkloadSettings w;
    w.layout = layout;
    w.n_language = 3;
    ModelConfig c;
    c.video_dim = 4;
    const auto prompt = make_prompt(w, c, 0);
    EXPECT_EQ(src.build(prompt, nullptr).retained.size(), retained_budget(layout.size(), 0.4)) << m;
  }
  PruningSettings s;
  s.method = "two_stage";
  EXPECT_TRUE(make_plan_source(s, 0.4, 0).needs_capture);
  s.method = "nope";
  EXPECT_THROW(make_plan_source(s, 0.4, 0), ConfigError);
}

TEST(Ablate, FullHasZeroDeltaAndStage2MatchesUniform) {
  auto rc = small_run();
  rc.draft.reset();
  rc.pruning.ratio = 0.6;
  const Model target = load_or_init(rc.target);
  const auto rows = ablate(rc, target, nullptr, {"full", "stage2_only", "uniform"});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_DOUBLE_EQ(rows[0].delta_tau, 0.0);
  EXPECT_DOUBLE_EQ(rows[1].summary.tau, rows[2].summary.tau);
  EXPECT_EQ(default_ablation_variants().size(), 9u);
}

TEST(Latency, SingleRowAndLimits) {
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 16;
  c.n_heads = 2;
  c.vocab_size = 16;
  c.max_positions = 2048;
  const auto m = Model::init(c);
  const auto rows = latency_sweep(m, {1000}, 10, 1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].length, 1000u);
  EXPECT_GT(rows[0].mean_ms, 0.0);
  EXPECT_THROW(latency_sweep(m, {2040}, 10, 1), ConfigError);
}

TEST(SequenceIo, RoundTrip) {
  WorkloadSpec s;
  s.layout = {2, 2, 2};
  s.video_dim = 3;
  s.n_language_tokens = 4;
  const auto seq = gen_workload(s);
  std::stringstream ss;
  write_sequence(ss, seq);
  EXPECT_EQ(read_sequence(ss), seq);
  std::istringstream bad("{\"format\": \"x\"}");
  EXPECT_THROW(read_sequence(bad), ConfigError);
}

}  // namespace
}  // namespace vidspec
