// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vidspec/common.hpp"
#include "vidspec/guidance.hpp"
#include "vidspec/harness.hpp"
#include "vidspec/trainer.hpp"

using namespace vidspec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

// 1
Outcome lossless_matrix() {
  const VideoLayout layout{4, 6, 6};
  int total = 0, identical = 0;
  std::string first_bad;
  for (std::uint64_t seed : {1, 2}) {
    ModelConfig tc;
    tc.n_layers = 2;
    tc.n_heads = 4;
    tc.d_model = 64;
    tc.vocab_size = 128;
    tc.video_dim = 32;
    tc.max_positions = 1024;
    tc.seed = seed;
    ModelConfig dc = tc;
    dc.n_layers = 1;
    dc.n_heads = 2;
    dc.d_model = 32;
    dc.seed = seed + 100;
    const Model target = Model::init(tc);
    const Model small = Model::init(dc);
    const auto prompt = testing::random_sequence(layout, 12, 32, 128, seed);
    const auto ref = run_vanilla(target, prompt, 128).tokens;
    for (bool self : {false, true}) {
      for (auto shape : {DraftShape::kChain, DraftShape::kTree}) {
        for (double r : {0.0, 0.5, 0.9, 1.0}) {
          PruningSettings ps;
          ps.ratio = r;
          SpeculativeOptions opt;
          opt.shape = shape;
          opt.gamma = 4;
          opt.tree = TreeTemplate::default_tree();
          const auto out =
              run_speculative(target, self ? target : small, prompt, make_plan_source(ps, r, 0), opt, 128);
          ++total;
          if (out.tokens == ref) {
            ++identical;
          } else if (first_bad.empty()) {
            first_bad = std::string(self ? "self" : "std") + (shape == DraftShape::kTree ? "/tree" : "/chain") +
                        fmt(" r=%.1f", r);
          }
        }
      }
    }
  }
  return {total >= 24 && identical == total,
          std::to_string(identical) + "/" + std::to_string(total) + " configurations identical to vanilla" +
              (first_bad.empty() ? "" : ", first mismatch " + first_bad)};
}

// 2
Outcome self_agreement() {
  auto cfg = testing::small_config(21);
  cfg.video_dim = 16;
  const Model m = Model::init(cfg);
  const auto prompt = testing::random_sequence({4, 4, 4}, 8, 16, cfg.vocab_size, 21);
  const auto out = run_sd_chain(m, m, prompt, plan_identity(prompt.layout), 4, 64);
  bool all4 = true;
  for (const auto& s : out.steps) all4 = all4 && s.accepted == 4;
  return {all4 && out.metrics.tau == 5.0 && out.tokens == run_vanilla(m, prompt, 64).tokens,
          std::to_string(out.steps.size()) + " steps all accepted 4, tau=" + fmt("%.6f", out.metrics.tau)};
}

// 3
Outcome top_p_oracle() {
  std::mt19937_64 rng(3);
  int agree = 0;
  const double lambdas[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 512)(rng);
    const auto s = oracles::random_scores(rng, n);
    const double lambda = lambdas[i % 5];
    const auto got = stage1_top_p(s, lambda);
    agree += std::set<std::size_t>(got.begin(), got.end()) == oracles::brute_force_top_p(s.scores, lambda);
  }
  return {agree == 1000, std::to_string(agree) + "/1000 score vectors match the brute-force prefix oracle"};
}

// 4
Outcome budget_exactness() {
  std::mt19937_64 rng(4);
  int cases = 0, exact = 0;
  std::uniform_int_distribution<int> dim(1, 8);
  for (int i = 0; i < 500; ++i) {
    const VideoLayout layout{dim(rng), dim(rng), dim(rng)};
    double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (i % 50 == 0) r = (i / 50) % 2 ? 1.0 : 0.0;
    for (const auto& plan : oracles::all_method_plans(layout, r, rng())) {
      ++cases;
      const auto want = static_cast<std::size_t>(round_half_away((1.0 - r) * static_cast<double>(layout.size())));
      exact += plan.retained.size() == want;
    }
  }
  return {exact == cases, std::to_string(exact) + "/" + std::to_string(cases) +
                              " plans (500 cases x 8 methods) retain exactly round((1-r)|V|)"};
}

// 5
Outcome tree_mask_equivalence() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  int trees = 0;
  for (int t = 0; t < 50; ++t) {
    const Model m = Model::init(testing::small_config(500 + t));
    const auto base = m.prefill(testing::random_sequence({2, 2, 3}, 4, 32, 64, 600 + t));
    const int n = std::uniform_int_distribution<int>(1, 32)(rng);
    std::vector<int> parent(n, -1), depth(n, 0), tokens(n);
    std::vector<std::int64_t> pos(n);
    const std::int64_t p0 = base.cache.next_position();
    std::vector<std::vector<std::uint8_t>> mask(n, std::vector<std::uint8_t>(n, 0));
    for (int i = 0; i < n; ++i) {
      tokens[i] = std::uniform_int_distribution<int>(0, 63)(rng);
      if (i > 0) {
        parent[i] = std::uniform_int_distribution<int>(0, i - 1)(rng);
        depth[i] = depth[parent[i]] + 1;
        mask[i] = mask[parent[i]];
      }
      mask[i][i] = 1;
      pos[i] = p0 + depth[i];
    }
    auto cache = base.cache;
    const auto tree = m.forward_tree(cache, tokens, pos, mask);
    for (int i = 0; i < n; ++i) {
      std::vector<int> path;
      for (int a = i; a >= 0; a = parent[a]) path.push_back(a);
      auto c = base.cache;
      std::vector<float> logits;
      for (auto it = path.rbegin(); it != path.rend(); ++it) logits = m.decode_step(c, tokens[*it], pos[*it]);
      worst = std::max(worst, testing::relative_error(tree[i], logits));
    }
    ++trees;
  }
  return {worst <= 1e-5, std::to_string(trees) + " random trees, worst relative error " + fmt("%.3g", worst)};
}

// 6
Outcome rollback_determinism() {
  std::mt19937_64 rng(6);
  int matched = 0;
  for (int t = 0; t < 100; ++t) {
    const Model m = Model::init(testing::small_config(700 + t % 7));
    const auto seq = testing::random_sequence({1, 2, std::uniform_int_distribution<int>(1, 4)(rng)},
                                              std::uniform_int_distribution<int>(1, 4)(rng), 32, 64, rng());
    std::uniform_int_distribution<int> tok(0, 63);
    auto run = m.prefill(seq);
    const std::size_t n0 = run.cache.length();
    std::int64_t p = run.cache.next_position();
    const int k = std::uniform_int_distribution<int>(1, 8)(rng);
    std::vector<int> decoded;
    std::vector<std::int64_t> decoded_pos;
    std::vector<std::size_t> keep(n0);
    for (std::size_t s = 0; s < n0; ++s) keep[s] = s;
    std::vector<int> kept;
    if (t % 2 == 0) {
      // Prefix rollback after plain decoding.
      for (int i = 0; i < k; ++i) {
        decoded.push_back(tok(rng));
        decoded_pos.push_back(p);
        m.decode_step(run.cache, decoded.back(), p++);
      }
      const int cut = static_cast<int>(rng() % (k + 1));
      for (int i = 0; i < cut; ++i) kept.push_back(i);
      run.cache.rollback(n0 + cut);
    } else {
      // Slot-set rollback after a tree pass: kept slots form a path, dropped
      // slots hang off it as leaves the path never sees.
      std::vector<std::vector<std::uint8_t>> mask(k, std::vector<std::uint8_t>(k, 0));
      int last = -1;
      for (int i = 0; i < k; ++i) {
        const bool stay = i == 0 || rng() % 2 == 0;
        decoded.push_back(tok(rng));
        if (last >= 0) mask[i] = mask[last];
        mask[i][i] = 1;
        decoded_pos.push_back(last < 0 ? p : decoded_pos[last] + 1);
        if (stay) {
          last = i;
          keep.push_back(n0 + i);
          kept.push_back(i);
        }
      }
      m.forward_tree(run.cache, decoded, decoded_pos, mask);
      run.cache.rollback(keep);
    }
    auto fresh = m.prefill(seq);
    for (int i : kept) m.decode_step(fresh.cache, decoded[i], decoded_pos[i]);
    bool same = true;
    std::int64_t q = std::max(run.cache.next_position(), fresh.cache.next_position());
    for (int i = 0; i < 4; ++i, ++q) {
      const int x = tok(rng);
      same = same && m.decode_step(run.cache, x, q) == m.decode_step(fresh.cache, x, q);
    }
    matched += same;
  }
  return {matched == 100, std::to_string(matched) + "/100 traces bitwise equal to fresh-cache traces"};
}

// 7
Outcome speedup_model() {
  const double worked = predicted_speedup(2.0, 4, 0.1, 1.0, 1.0);
  const bool formula = std::abs(worked - 2.0 / 1.4) <= 1e-12 &&
                       std::abs(predicted_speedup(3.0, 4, 0.0, 1.0, 1.0) - 3.0) <= 1e-12 &&
                       std::abs(predicted_speedup(1.0, 4, 0.1, 1.0, 1.0) - 1.0 / 1.4) <= 1e-12;
  RunConfig rc = RunConfig::defaults();
  rc.target.config.n_layers = 4;
  rc.target.config.n_heads = 4;
  rc.target.config.d_model = 256;
  rc.target.config.max_positions = 2048;
  rc.draft->config.n_layers = 1;
  rc.draft->config.d_model = 128;
  rc.draft->config.max_positions = 2048;
  rc.workload.layout = {4, 8, 8};
  rc.workload.n_language = 16;
  rc.n_generate = 64;
  rc.n_prompts = 3;
  const auto s = bench(rc).summaries.at(0);
  const double rel = std::abs(s.measured_speedup / s.predicted_speedup - 1.0);
  const double recomputed = predicted_speedup(s.tau, s.gamma, s.t_d, s.t_t, s.t_t_gamma);
  return {formula && rel <= 0.25 && std::abs(recomputed - s.predicted_speedup) <= 1e-12,
          "worked case " + fmt("%.4f", worked) + "; timed run measured " + fmt("%.3f", s.measured_speedup) +
              " vs predicted " + fmt("%.3f", s.predicted_speedup) + " (" + fmt("%.1f", rel * 100) + "% apart)"};
}

// 8
Outcome planted_trends() {
  TrainConfig tc;  // the shipped recipe
  const Model base = Model::init(toy_model_config(tc.task, 1));
  const Model trained = train_toy(base, tc).model;
  const double ratio = planted_guidance_ratio(trained, tc.task, 50);

  auto config = [&](std::uint64_t seed, const std::string& method, double r, const std::string& mode) {
    RunConfig rc = RunConfig::defaults();
    rc.target.config = trained.config();
    rc.draft.reset();
    rc.mode = mode;
    rc.gamma = TreeTemplate::default_tree().max_depth();
    rc.workload.kind = "planted";
    rc.workload.task = tc.task;
    rc.workload.layout = tc.task.layout;
    rc.workload.n_language = tc.task.n_query;
    rc.workload.seed = seed;
    rc.pruning.method = method;
    rc.pruning.lambda_r = kLambdaSelfDraft;
    rc.pruning.ratio = r;
    rc.pruning.seed = seed;
    rc.n_generate = tc.task.n_continuation;
    rc.n_prompts = 50;
    return rc;
  };
  auto tau = [&](std::uint64_t seed, const std::string& method, double r, const std::string& mode) {
    return bench(config(seed, method, r, mode), trained, nullptr).summaries.at(0).tau;
  };

  int wins = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double g = tau(seed, kMethodTwoStage, 0.9, "sd-chain");
    const double rnd = tau(seed, kMethodRandom, 0.9, "sd-chain");
    wins += g >= rnd;
    per_seed += (per_seed.empty() ? "" : " ") + fmt("%.2f", g) + "/" + fmt("%.2f", rnd);
  }
  const double chain = tau(1, kMethodTwoStage, 0.9, "sd-chain");
  const double tree = tau(1, kMethodTwoStage, 0.9, "sd-tree");
  const double r_half = tau(1, kMethodRandom, 0.5, "sd-chain");
  const double r_all = tau(1, kMethodRandom, 1.0, "sd-chain");
  const bool pass = ratio >= 3.0 && wins >= 4 && tree >= chain && r_all < r_half;
  return {pass, "guidance ratio " + fmt("%.2f", ratio) + "; (a) guided/random tau at r=0.9 per seed " + per_seed +
                    " -> " + std::to_string(wins) + "/5; (b) tree " + fmt("%.2f", tree) + " vs chain " +
                    fmt("%.2f", chain) + "; (c) random r=1.0 " + fmt("%.2f", r_all) + " vs r=0.5 " +
                    fmt("%.2f", r_half)};
}

// 9
Outcome latency_trend() {
  const Model draft = Model::init(RunConfig::defaults().draft->config);
  const auto rows = latency_sweep(draft, {1024, 4096, 8192, 16384}, 100, 3);
  std::ofstream csv("latency_sweep.csv");
  write_latency_csv(csv, rows);
  bool ok = static_cast<bool>(csv);
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) ok = ok && rows[i].mean_ms >= 0.95 * rows[i - 1].mean_ms;
    detail += (i ? ", " : "") + std::to_string(rows[i].length) + ":" + fmt("%.3fms", rows[i].mean_ms);
  }
  return {ok, detail + " (latency_sweep.csv)"};
}

// 10
Outcome profile_shape() {
  std::mt19937_64 rng(10);
  int good = 0;
  double worst_curvature = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto s = oracles::random_scores(rng, std::uniform_int_distribution<std::size_t>(1, 512)(rng));
    const auto p = cumulative_profile(s);
    bool ok = p.points.front() == std::make_pair(0.0, 0.0) && p.points.back() == std::make_pair(1.0, 1.0) &&
              p.points.size() == s.scores.size() + 1;
    for (std::size_t k = 1; k < p.order.size(); ++k) ok = ok && s.scores[p.order[k]] <= s.scores[p.order[k - 1]];
    for (std::size_t k = 1; k < p.points.size(); ++k) ok = ok && p.points[k].second >= p.points[k - 1].second;
    for (std::size_t k = 1; k + 1 < p.points.size(); ++k) {
      const double curvature =
          (p.points[k + 1].second - p.points[k].second) - (p.points[k].second - p.points[k - 1].second);
      worst_curvature = std::max(worst_curvature, curvature);
      ok = ok && curvature <= 1e-12;
    }
    good += ok;
  }
  return {good == 100, std::to_string(good) + "/100 profiles run (0,0)->(1,1) and are concave; max slope increase " +
                           fmt("%.2g", worst_curvature)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 losslessness", lossless_matrix},
      {"2 self-agreement", self_agreement},
      {"3 top-p oracle", top_p_oracle},
      {"4 budget exactness", budget_exactness},
      {"5 tree-mask equivalence", tree_mask_equivalence},
      {"6 rollback determinism", rollback_determinism},
      {"7 speedup model", speedup_model},
      {"8 planted-task trends", planted_trends},
      {"9 latency trend", latency_trend},
      {"10 cumulative profile", profile_shape},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Stopwatch sw;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), sw.seconds());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
