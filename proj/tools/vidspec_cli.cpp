// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vidspec/common.hpp"
#include "vidspec/guidance.hpp"
#include "vidspec/harness.hpp"
#include "vidspec/trainer.hpp"

using namespace vidspec;

namespace {

// Exit codes: 1 runtime failure, 2 bad input, 3 losslessness violation.
constexpr int kExitFailure = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitLossless = 3;

std::ofstream open_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

std::ifstream open_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  return in;
}

MultimodalSequence load_sequence(const std::string& path) {
  auto in = open_read(path);
  return read_sequence(in);
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("bad index '" + item + "'");
    }
  }
  return out;
}

struct ModelFlags {
  std::string preset = "toy";
  int layers = 0, heads = 0, d_model = 0, vocab = 0, video_dim = -1, max_positions = 0;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "target | draft | toy")->check(CLI::IsMember({"target", "draft", "toy"}));
    app->add_option("--layers", layers, "override layer count");
    app->add_option("--heads", heads, "override head count");
    app->add_option("--d-model", d_model, "override width");
    app->add_option("--vocab", vocab, "override vocabulary size");
    app->add_option("--video-dim", video_dim, "override video feature width (0 = d_model)");
    app->add_option("--max-positions", max_positions, "override position limit");
    app->add_option("--seed", seed, "weight seed");
  }

  ModelConfig config() const {
    const auto d = RunConfig::defaults();
    ModelConfig c = preset == "target" ? d.target.config
                    : preset == "draft" ? d.draft->config
                                        : toy_model_config(PlantedTask{});
    if (layers) c.n_layers = layers;
    if (heads) c.n_heads = heads;
    if (d_model) c.d_model = d_model;
    if (vocab) c.vocab_size = vocab;
    if (video_dim >= 0) c.video_dim = video_dim;
    if (max_positions) c.max_positions = max_positions;
    c.seed = seed;
    c.validate();
    return c;
  }
};

void print_summary(const RatioSummary& s) {
  std::cout << s.method << " r=" << s.ratio << " tau=" << s.tau << " tok/s=" << s.tokens_per_s
            << " speedup=" << s.measured_speedup << " predicted=" << s.predicted_speedup << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vidspec: speculative decoding with attention-guided video token pruning"};
  app.require_subcommand(1);

  // init-model
  auto* init = app.add_subcommand("init-model", "write a freshly initialized checkpoint");
  ModelFlags init_flags;
  init_flags.add(init);
  std::string init_out;
  init->add_option("--out", init_out, "checkpoint path")->required();

  // gen-workload
  auto* gen = app.add_subcommand("gen-workload", "write a synthetic prompt");
  WorkloadSpec wspec;
  wspec.layout = {4, 14, 14};
  std::string planted_text, gen_out;
  gen->add_option("--frames", wspec.layout.frames);
  gen->add_option("--height", wspec.layout.height);
  gen->add_option("--width", wspec.layout.width);
  gen->add_option("--n-language", wspec.n_language_tokens);
  gen->add_option("--video-dim", wspec.video_dim);
  gen->add_option("--vocab", wspec.vocab_size);
  gen->add_option("--planted", planted_text, "comma-separated flat video indices");
  gen->add_option("--pattern", wspec.pattern, "signal dimension used by planted items");
  gen->add_option("--embedding-seed", wspec.embedding_seed);
  gen->add_option("--query-seed", wspec.query_seed);
  gen->add_option("--noise-scale", wspec.noise_scale);
  gen->add_option("--out", gen_out, "sequence file (JSON)")->required();

  // train-toy
  auto* train = app.add_subcommand("train-toy", "train the toy model on the planted-retrieval task");
  TrainConfig tcfg;
  std::string train_out, train_init, train_log;
  std::uint64_t train_model_seed = 1;
  train->add_option("--steps", tcfg.steps);
  train->add_option("--lr", tcfg.lr);
  train->add_option("--batch", tcfg.batch);
  train->add_option("--seed", tcfg.seed, "data order seed");
  train->add_option("--task-seed", tcfg.task.seed, "seed of the pattern permutations");
  train->add_option("--model-seed", train_model_seed, "initial weight seed");
  train->add_option("--init", train_init, "start from this checkpoint instead of a fresh model");
  train->add_option("--log", train_log, "loss CSV");
  train->add_option("--out", train_out, "checkpoint path")->required();

  // prune
  auto* prune = app.add_subcommand("prune", "build or apply a pruning plan");
  prune->require_subcommand(1);
  auto* plan_cmd = prune->add_subcommand("plan", "compute a plan for a sequence");
  auto* apply_cmd = prune->add_subcommand("apply", "apply a plan to a sequence");
  std::string p_model, p_seq, p_out, p_plan;
  PruningSettings p_settings;
  plan_cmd->add_option("--model", p_model, "checkpoint (needed for attention-guided methods)");
  plan_cmd->add_option("--sequence", p_seq)->required();
  plan_cmd->add_option("--method", p_settings.method);
  plan_cmd->add_option("--ratio", p_settings.ratio);
  plan_cmd->add_option("--lambda", p_settings.lambda_r);
  plan_cmd->add_option("--seed", p_settings.seed);
  plan_cmd->add_option("--out", p_out, "plan file")->required();
  apply_cmd->add_option("--sequence", p_seq)->required();
  apply_cmd->add_option("--plan", p_plan)->required();
  apply_cmd->add_option("--out", p_out, "pruned sequence file")->required();

  // guidance dump
  auto* guidance = app.add_subcommand("guidance", "attention guidance tools");
  guidance->require_subcommand(1);
  auto* dump = guidance->add_subcommand("dump", "write per-token scores and the cumulative profile as CSV");
  std::string g_model, g_seq, g_scores, g_profile;
  dump->add_option("--model", g_model)->required();
  dump->add_option("--sequence", g_seq)->required();
  dump->add_option("--scores", g_scores, "scores CSV")->required();
  dump->add_option("--profile", g_profile, "cumulative profile CSV")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "vanilla vs speculative decoding benchmark");
  std::string b_config, b_output, b_csv;
  bench_cmd->add_option("--config", b_config, "run config (JSON)")->required();
  bench_cmd->add_option("--output", b_output, "override the JSON-lines report path");
  bench_cmd->add_option("--csv-prefix", b_csv, "override the CSV table prefix");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "compare pruning variants against the full method");
  std::string a_config, a_variants, a_output, a_csv;
  ablate_cmd->add_option("--config", a_config, "run config (JSON)")->required();
  ablate_cmd->add_option("--variants", a_variants, "comma-separated variants (default: all)");
  ablate_cmd->add_option("--output", a_output, "JSON-lines report");
  ablate_cmd->add_option("--csv", a_csv, "CSV table");

  // latency-sweep
  auto* sweep = app.add_subcommand("latency-sweep", "per-token decode latency vs context length");
  ModelFlags s_flags;
  s_flags.preset = "draft";
  s_flags.add(sweep);
  std::string s_model, s_lengths = "1024,4096,8192,16384", s_csv;
  int s_steps = 100, s_repeats = 3;
  sweep->add_option("--model", s_model, "checkpoint (default: a fresh model from the preset)");
  sweep->add_option("--lengths", s_lengths, "comma-separated context lengths");
  sweep->add_option("--steps", s_steps, "decode steps per measurement");
  sweep->add_option("--repeats", s_repeats, "measurements per length (median reported)");
  sweep->add_option("--csv", s_csv, "CSV output (default: stdout)");

  // tree-template
  auto* tree_cmd = app.add_subcommand("tree-template", "write a greedy-expanded draft tree");
  std::string t_counts = "4,8,8,4,2", t_out;
  tree_cmd->add_option("--counts", t_counts, "nodes per depth");
  tree_cmd->add_option("--out", t_out, "template file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) {
      save_checkpoint(Model::init(init_flags.config()), init_out);
      std::cout << "wrote " << init_out << '\n';
    } else if (*gen) {
      wspec.planted = parse_index_list(planted_text);
      auto out = open_write(gen_out);
      const auto seq = gen_workload(wspec);
      write_sequence(out, seq);
      std::cout << "wrote " << gen_out << " (" << seq.size() << " items)\n";
    } else if (*train) {
      const Model start = train_init.empty() ? Model::init(toy_model_config(tcfg.task, train_model_seed))
                                             : load_checkpoint(train_init);
      std::ofstream log;
      if (!train_log.empty()) {
        log = open_write(train_log);
        log << "step,loss\n";
      }
      auto result = train_toy(start, tcfg, [&](int step, double loss) {
        if (log.is_open()) log << step << ',' << loss << '\n';
        if (step % 100 == 0 || step + 1 == tcfg.steps) std::cerr << "step " << step << " loss " << loss << '\n';
      });
      save_checkpoint(result.model, train_out);
      std::cout << "wrote " << train_out << "; planted/other guidance ratio on held-out prompts: "
                << planted_guidance_ratio(result.model, tcfg.task, 20) << '\n';
    } else if (*plan_cmd) {
      const auto seq = load_sequence(p_seq);
      const auto src = make_plan_source(p_settings, p_settings.ratio, 0);
      std::optional<AttentionCapture> capture;
      if (src.needs_capture) {
        if (p_model.empty()) throw ConfigError("--model is required for method " + p_settings.method);
        capture = load_checkpoint(p_model).prefill(seq, true, seq.num_video()).capture;
      }
      const auto plan = src.build(seq, capture ? &*capture : nullptr);
      auto out = open_write(p_out);
      write_plan(out, plan);
      std::cout << "retained " << plan.retained.size() << " of " << plan.num_video << " video tokens\n";
    } else if (*apply_cmd) {
      const auto seq = load_sequence(p_seq);
      auto in = open_read(p_plan);
      const auto pruned = apply_plan(seq, read_plan(in));
      auto out = open_write(p_out);
      write_sequence(out, pruned);
      std::cout << "wrote " << p_out << " (" << pruned.size() << " items)\n";
    } else if (*dump) {
      const auto seq = load_sequence(g_seq);
      const auto pre = load_checkpoint(g_model).prefill(seq, true, seq.num_video());
      const auto scores = score_tokens(extract_guidance(*pre.capture, seq));
      auto s = open_write(g_scores);
      s << "flat_index,frame,row,col,score\n";
      for (std::size_t j = 0; j < scores.scores.size(); ++j) {
        s << j << ',' << seq.layout.frame_of(j) << ',' << seq.layout.row_of(j) << ',' << seq.layout.col_of(j) << ','
          << scores.scores[j] << '\n';
      }
      const auto profile = cumulative_profile(scores);
      auto p = open_write(g_profile);
      p << "fraction_tokens,fraction_attention\n";
      for (const auto& [x, y] : profile.points) p << x << ',' << y << '\n';
    } else if (*bench_cmd) {
      auto rc = load_run_config(b_config);
      if (!b_output.empty()) rc.output = b_output;
      if (!b_csv.empty()) rc.csv_prefix = b_csv;
      const auto report = bench(rc);
      emit_report(rc, report);
      for (const auto& s : report.summaries) print_summary(s);
    } else if (*ablate_cmd) {
      const auto rc = load_run_config(a_config);
      std::vector<std::string> variants;
      if (a_variants.empty()) {
        variants = default_ablation_variants();
      } else {
        std::stringstream ss(a_variants);
        for (std::string v; std::getline(ss, v, ',');) {
          if (!v.empty()) variants.push_back(v);
        }
      }
      const Model target = load_or_init(rc.target);
      std::optional<Model> draft;
      if (rc.draft) draft = load_or_init(*rc.draft);
      const auto rows = ablate(rc, target, draft ? &*draft : nullptr, variants);
      if (!a_output.empty()) {
        auto out = open_write(a_output);
        write_ablation_jsonl(out, rows);
      }
      if (!a_csv.empty()) {
        auto out = open_write(a_csv);
        write_ablation_csv(out, rows);
      }
      write_ablation_csv(std::cout, rows);
    } else if (*sweep) {
      const Model model = s_model.empty() ? Model::init(s_flags.config()) : load_checkpoint(s_model);
      const auto rows = latency_sweep(model, parse_index_list(s_lengths), s_steps, s_repeats);
      if (s_csv.empty()) {
        write_latency_csv(std::cout, rows);
      } else {
        auto out = open_write(s_csv);
        write_latency_csv(out, rows);
      }
    } else if (*tree_cmd) {
      std::vector<int> counts;
      for (auto c : parse_index_list(t_counts)) counts.push_back(static_cast<int>(c));
      auto out = open_write(t_out);
      TreeTemplate::expand(counts).write(out);
    }
  } catch (const LosslessnessViolation& e) {
    std::cerr << "losslessness violation: " << e.what() << '\n';
    return kExitLossless;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const PlanError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
