// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>

#include "json.hpp"
#include "vidspec/common.hpp"
#include "vidspec/harness.hpp"

namespace vidspec {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

bool uses_guidance(const std::string& method) {
  return method == kMethodTwoStage || method == "stage1_only" || method == "stage2_only";
}

// Plan source that also keeps the guidance scores it computed, so the
// profile can be derived afterwards outside the timed region.
struct RecordingSource {
  PlanSource source;
  std::shared_ptr<std::optional<GuidanceScores>> scores;
};

RecordingSource recording_source(const PruningSettings& s, double ratio, int prompt_index) {
  RecordingSource out;
  out.scores = std::make_shared<std::optional<GuidanceScores>>();
  if (!uses_guidance(s.method)) {
    out.source = make_plan_source(s, ratio, prompt_index);
    return out;
  }
  auto slot = out.scores;
  const std::string method = s.method;
  const double lambda = method == "stage2_only" ? 0.0 : s.lambda_r;
  out.source = {[slot, method, ratio, lambda](const MultimodalSequence& seq, const AttentionCapture* cap) {
                  *slot = score_tokens(extract_guidance(*cap, seq));
                  if (method == "stage1_only") return plan_stage1_only(**slot, seq.layout, ratio, lambda);
                  return plan_two_stage(**slot, seq.layout, ratio, lambda);
                },
                true};
  return out;
}

}  // namespace

void verify_lossless(const std::vector<int>& expected, const std::vector<int>& got, int prompt, double ratio) {
  if (expected == got) return;
  std::size_t i = 0;
  while (i < expected.size() && i < got.size() && expected[i] == got[i]) ++i;
  throw LosslessnessViolation("speculative output differs from vanilla on prompt " + std::to_string(prompt) +
                              " at ratio " + std::to_string(ratio) + ", first mismatch at token " +
                              std::to_string(i));
}

namespace {

struct Prepared {
  std::vector<MultimodalSequence> prompts;
  std::vector<DecodeResult> vanilla;
  double t_t = 0.0;  // pooled vanilla per-token decode latency
  double vanilla_tokens_per_s = 0.0;
  Breakdown vanilla_breakdown;
};

Prepared prepare(const RunConfig& rc, const Model& target) {
  Prepared p;
  double decode = 0.0;
  double tokens = 0.0;
  for (int i = 0; i < rc.n_prompts; ++i) {
    p.prompts.push_back(make_prompt(rc.workload, target.config(), i));
    p.vanilla.push_back(run_vanilla(target, p.prompts.back(), rc.n_generate));
    const auto& v = p.vanilla.back();
    decode += v.metrics.t_t * (rc.n_generate - 1);
    tokens += rc.n_generate - 1;
    p.vanilla_breakdown.target_prefill += v.timings.target_prefill / rc.n_prompts;
    p.vanilla_breakdown.target_decode += v.timings.decode / rc.n_prompts;
    p.vanilla_breakdown.other += (v.timings.total - v.timings.target_prefill - v.timings.decode) / rc.n_prompts;
    p.vanilla_breakdown.total += v.timings.total / rc.n_prompts;
  }
  p.t_t = tokens > 0 ? decode / tokens : 0.0;
  p.vanilla_tokens_per_s = p.t_t > 0 ? 1.0 / p.t_t : 0.0;
  return p;
}

RatioSummary run_ratio(const RunConfig& rc, const Model& target, const Model& draft, const Prepared& prep,
                       const PruningSettings& settings, double ratio, const TreeTemplate& tree,
                       std::vector<PromptResult>* prompt_results) {
  RatioSummary sum;
  sum.method = settings.method;
  sum.ratio = ratio;
  sum.n_prompts = rc.n_prompts;
  sum.vanilla_tokens_per_s = prep.vanilla_tokens_per_s;
  sum.vanilla_breakdown = prep.vanilla_breakdown;
  sum.t_t = prep.t_t;
  if (rc.mode == "vanilla") {
    sum.tokens_per_s = prep.vanilla_tokens_per_s;
    sum.breakdown = prep.vanilla_breakdown;
    if (prompt_results) {
      for (int i = 0; i < rc.n_prompts; ++i) prompt_results->push_back({i, ratio, prep.vanilla[i], {}, {}});
    }
    return sum;
  }

  SpeculativeOptions opt;
  opt.shape = rc.mode == "sd-tree" ? DraftShape::kTree : DraftShape::kChain;
  opt.gamma = rc.gamma;
  opt.tree = tree;
  opt.vanilla_t_t = prep.t_t;
  sum.gamma = opt.shape == DraftShape::kTree ? tree.max_depth() : rc.gamma;

  std::vector<StepStats> all_steps;
  std::vector<double> step_tau_sum;
  std::vector<int> step_count;
  std::vector<std::pair<double, double>> profile_sum;
  int n_profiles = 0;
  for (int i = 0; i < rc.n_prompts; ++i) {
    auto src = recording_source(settings, ratio, i);
    auto sd = run_speculative(target, draft, prep.prompts[i], src.source, opt, rc.n_generate);
    verify_lossless(prep.vanilla[i].tokens, sd.tokens, i, ratio);
    all_steps.insert(all_steps.end(), sd.steps.begin(), sd.steps.end());
    double draft_t = 0.0, verify_t = 0.0;
    for (const auto& st : sd.steps) {
      draft_t += st.draft_time;
      verify_t += st.verify_time;
      if (static_cast<std::size_t>(st.step_index) >= step_tau_sum.size()) {
        step_tau_sum.resize(st.step_index + 1, 0.0);
        step_count.resize(st.step_index + 1, 0);
      }
      step_tau_sum[st.step_index] += st.accepted + 1;
      step_count[st.step_index] += 1;
    }
    auto& b = sum.breakdown;
    const double n = rc.n_prompts;
    b.target_prefill += sd.timings.target_prefill / n;
    b.pruning += sd.timings.pruning / n;
    b.draft_prefill += sd.timings.draft_prefill / n;
    b.draft_decode += draft_t / n;
    b.target_decode += verify_t / n;
    b.other += (sd.timings.total - sd.timings.target_prefill - sd.timings.pruning - sd.timings.draft_prefill -
                draft_t - verify_t) /
               n;
    b.total += sd.timings.total / n;
    std::optional<CumulativeProfile> profile;
    if (*src.scores) {
      try {
        profile = cumulative_profile(**src.scores);
      } catch (const DegenerateGuidanceError&) {
      }
    }
    if (profile) {
      if (profile_sum.empty()) profile_sum.assign(profile->points.size(), {0.0, 0.0});
      if (profile_sum.size() == profile->points.size()) {
        for (std::size_t k = 0; k < profile_sum.size(); ++k) {
          profile_sum[k].first += profile->points[k].first;
          profile_sum[k].second += profile->points[k].second;
        }
        ++n_profiles;
      }
    }
    if (prompt_results) prompt_results->push_back({i, ratio, prep.vanilla[i], std::move(sd), std::move(profile)});
  }
  const auto m = compute_metrics(all_steps, prep.t_t, sum.gamma);
  sum.tau = m.tau;
  sum.mean_accepted = m.mean_accepted;
  sum.tokens_per_s = m.tokens_per_s;
  sum.measured_speedup = m.measured_speedup;
  sum.predicted_speedup = m.predicted_speedup;
  sum.t_d = m.t_d;
  sum.t_t_gamma = m.t_t_gamma;
  for (std::size_t k = 0; k < step_tau_sum.size(); ++k) sum.tau_by_step.push_back(step_tau_sum[k] / step_count[k]);
  for (auto& pt : profile_sum) sum.profile.emplace_back(pt.first / n_profiles, pt.second / n_profiles);
  return sum;
}

TreeTemplate resolve_tree(const RunConfig& rc) {
  return rc.tree.empty() ? TreeTemplate::default_tree() : TreeTemplate::load(rc.tree);
}

json breakdown_json(const Breakdown& b) {
  return {{"target_prefill_s", b.target_prefill}, {"target_decode_s", b.target_decode},
          {"draft_prefill_s", b.draft_prefill},   {"draft_decode_s", b.draft_decode},
          {"pruning_s", b.pruning},               {"other_s", b.other},
          {"total_s", b.total}};
}

json summary_json(const RatioSummary& s) {
  json pts = json::array();
  for (const auto& p : s.profile) pts.push_back({p.first, p.second});
  return {{"type", "summary"},
          {"method", s.method},
          {"ratio", s.ratio},
          {"n_prompts", s.n_prompts},
          {"tau", s.tau},
          {"mean_accepted", s.mean_accepted},
          {"tokens_per_s", s.tokens_per_s},
          {"vanilla_tokens_per_s", s.vanilla_tokens_per_s},
          {"measured_speedup", s.measured_speedup},
          {"predicted_speedup", s.predicted_speedup},
          {"t_d_s", s.t_d},
          {"t_t_s", s.t_t},
          {"t_t_gamma_s", s.t_t_gamma},
          {"gamma", s.gamma},
          {"breakdown", breakdown_json(s.breakdown)},
          {"vanilla_breakdown", breakdown_json(s.vanilla_breakdown)},
          {"tau_by_step", s.tau_by_step},
          {"profile", pts}};
}

}  // namespace

Model load_or_init(const ModelSource& source) {
  if (!source.checkpoint.empty()) {
    auto m = load_checkpoint(source.checkpoint);
    if (!(m.config() == source.config)) {
      // The checkpoint carries its own config; the declared one only matters
      // for geometry checks, so accept it as long as the shapes agree.
      const auto& a = m.config();
      const auto& b = source.config;
      if (a.n_layers != b.n_layers || a.d_model != b.d_model || a.n_heads != b.n_heads ||
          a.vocab_size != b.vocab_size || a.video_features() != b.video_features()) {
        throw ConfigError("checkpoint " + source.checkpoint + " does not match the configured geometry");
      }
    }
    return m;
  }
  return Model::init(source.config);
}

MultimodalSequence make_prompt(const WorkloadSettings& w, const ModelConfig& target, int index) {
  if (w.kind == "planted") {
    PlantedTask task = w.task;
    task.layout = w.layout;
    task.n_query = w.n_language;
    return task.sample(mix(w.seed, static_cast<std::uint64_t>(index))).prompt;
  }
  WorkloadSpec spec;
  spec.layout = w.layout;
  spec.n_language_tokens = w.n_language;
  spec.video_dim = target.video_features();
  spec.vocab_size = target.vocab_size;
  spec.embedding_seed = mix(w.seed, 2 * static_cast<std::uint64_t>(index));
  spec.query_seed = mix(w.seed, 2 * static_cast<std::uint64_t>(index) + 1);
  return gen_workload(spec);
}

PlanSource make_plan_source(const PruningSettings& s, double ratio, int prompt_index) {
  const std::string& m = s.method;
  if (uses_guidance(m)) return recording_source(s, ratio, prompt_index).source;
  if (m == kMethodUniform) {
    return {[ratio](const MultimodalSequence& seq, const AttentionCapture*) { return plan_uniform(seq.layout, ratio); },
            false};
  }
  if (m == kMethodIdentity) {
    return {[](const MultimodalSequence& seq, const AttentionCapture*) { return plan_identity(seq.layout); }, false};
  }
  if (m == kMethodRandom) {
    const std::uint64_t seed = mix(s.seed, static_cast<std::uint64_t>(prompt_index));
    return {[ratio, seed](const MultimodalSequence& seq, const AttentionCapture*) {
              return plan_random(seq.layout, ratio, seed);
            },
            false};
  }
  if (m == kMethodFrameDrop) {
    return {[ratio](const MultimodalSequence& seq, const AttentionCapture*) {
              return plan_frame_drop(seq.layout, ratio);
            },
            false};
  }
  if (m == kMethodTemporal) {
    return {[ratio](const MultimodalSequence& seq, const AttentionCapture*) {
              return plan_temporal_similarity(seq, ratio);
            },
            false};
  }
  if (m == kMethodWindow || m.rfind(std::string(kMethodWindow) + ":", 0) == 0) {
    const auto anchor = m == kMethodWindow ? WindowAnchor::kFront : parse_window_anchor(m.substr(7));
    return {[ratio, anchor](const MultimodalSequence& seq, const AttentionCapture*) {
              return plan_window(seq.layout, ratio, anchor);
            },
            false};
  }
  throw ConfigError("unknown pruning method '" + m + "'");
}

BenchmarkReport bench(const RunConfig& rc) {
  rc.validate();
  const Model target = load_or_init(rc.target);
  if (rc.draft) {
    const Model draft = load_or_init(*rc.draft);
    return bench(rc, target, &draft);
  }
  return bench(rc, target, nullptr);
}

BenchmarkReport bench(const RunConfig& rc, const Model& target, const Model* draft) {
  rc.validate();
  make_plan_source(rc.pruning, 0.0, 0);  // reject unknown methods before any work
  const TreeTemplate tree = rc.mode == "sd-tree" ? resolve_tree(rc) : TreeTemplate();
  BenchmarkReport report;
  report.mode = rc.mode;
  const Prepared prep = prepare(rc, target);
  const auto ratios = rc.ratios.empty() ? std::vector<double>{rc.pruning.ratio} : rc.ratios;
  for (double r : ratios) {
    report.summaries.push_back(
        run_ratio(rc, target, draft ? *draft : target, prep, rc.pruning, r, tree, &report.prompts));
  }
  return report;
}

void write_report_jsonl(std::ostream& out, const BenchmarkReport& report, bool step_records) {
  for (const auto& p : report.prompts) {
    if (step_records && p.speculative) {
      for (const auto& st : p.speculative->steps) {
        out << json{{"type", "step"},
                    {"ratio", p.ratio},
                    {"prompt", p.prompt},
                    {"step", st.step_index},
                    {"accepted", st.accepted},
                    {"draft_ms", st.draft_time * 1e3},
                    {"verify_ms", st.verify_time * 1e3}}
                   .dump()
            << '\n';
      }
    }
    json rec{{"type", "prompt"}, {"mode", report.mode}, {"ratio", p.ratio}, {"prompt", p.prompt}, {"lossless", true}};
    if (p.speculative) {
      const auto& sd = *p.speculative;
      rec["tau"] = sd.metrics.tau;
      rec["steps"] = sd.steps.size();
      rec["tokens_per_s"] = sd.metrics.tokens_per_s;
      rec["measured_speedup"] = sd.metrics.measured_speedup;
      rec["predicted_speedup"] = sd.metrics.predicted_speedup;
      if (sd.plan) {
        rec["retained"] = sd.plan->retained.size();
        rec["stage1"] = sd.plan->stage1.size();
        rec["uniform_fallback"] = sd.plan->uniform_fallback;
      }
    } else {
      rec["tau"] = 1.0;
      rec["tokens_per_s"] = p.vanilla.metrics.tokens_per_s;
    }
    out << rec.dump() << '\n';
  }
  for (const auto& s : report.summaries) {
    auto j = summary_json(s);
    j["mode"] = report.mode;
    out << j.dump() << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<RatioSummary>& summaries) {
  out << "method,ratio,n_prompts,tau,mean_accepted,tokens_per_s,vanilla_tokens_per_s,measured_speedup,"
         "predicted_speedup,t_d_ms,t_t_ms,t_t_gamma_ms,gamma\n";
  for (const auto& s : summaries) {
    out << s.method << ',' << s.ratio << ',' << s.n_prompts << ',' << s.tau << ',' << s.mean_accepted << ','
        << s.tokens_per_s << ',' << s.vanilla_tokens_per_s << ',' << s.measured_speedup << ','
        << s.predicted_speedup << ',' << s.t_d * 1e3 << ',' << s.t_t * 1e3 << ',' << s.t_t_gamma * 1e3 << ','
        << s.gamma << '\n';
  }
}

void write_breakdown_csv(std::ostream& out, const std::vector<RatioSummary>& summaries) {
  out << "method,ratio,run,target_prefill_s,target_decode_s,draft_prefill_s,draft_decode_s,pruning_s,other_s,"
         "total_s\n";
  for (const auto& s : summaries) {
    for (const auto& [name, b] : {std::pair{"vanilla", &s.vanilla_breakdown}, std::pair{"speculative", &s.breakdown}}) {
      out << s.method << ',' << s.ratio << ',' << name << ',' << b->target_prefill << ',' << b->target_decode << ','
          << b->draft_prefill << ',' << b->draft_decode << ',' << b->pruning << ',' << b->other << ',' << b->total
          << '\n';
    }
  }
}

void write_step_csv(std::ostream& out, const std::vector<RatioSummary>& summaries) {
  out << "method,ratio,step,tau\n";
  for (const auto& s : summaries) {
    for (std::size_t k = 0; k < s.tau_by_step.size(); ++k) {
      out << s.method << ',' << s.ratio << ',' << k << ',' << s.tau_by_step[k] << '\n';
    }
  }
}

void write_profile_csv(std::ostream& out, const std::vector<RatioSummary>& summaries) {
  out << "method,ratio,fraction_tokens,fraction_attention\n";
  for (const auto& s : summaries) {
    for (const auto& p : s.profile) out << s.method << ',' << s.ratio << ',' << p.first << ',' << p.second << '\n';
  }
}

namespace {

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

}  // namespace

void emit_report(const RunConfig& rc, const BenchmarkReport& report) {
  if (!rc.output.empty()) {
    auto out = open_out(rc.output);
    write_report_jsonl(out, report, rc.step_records);
  }
  if (!rc.csv_prefix.empty()) {
    auto a = open_out(rc.csv_prefix + "_summary.csv");
    write_summary_csv(a, report.summaries);
    auto b = open_out(rc.csv_prefix + "_breakdown.csv");
    write_breakdown_csv(b, report.summaries);
    auto c = open_out(rc.csv_prefix + "_steps.csv");
    write_step_csv(c, report.summaries);
    auto d = open_out(rc.csv_prefix + "_profile.csv");
    write_profile_csv(d, report.summaries);
  }
}

std::vector<std::string> default_ablation_variants() {
  return {"full",          "stage1_only",   "stage2_only", kMethodRandom, "window:front",
          "window:middle", "window:end",    kMethodFrameDrop, kMethodTemporal};
}

std::vector<AblationRow> ablate(const RunConfig& rc, const Model& target, const Model* draft,
                                const std::vector<std::string>& variants) {
  rc.validate();
  if (rc.mode == "vanilla") throw ConfigError("ablation needs a speculative mode");
  const TreeTemplate tree = rc.mode == "sd-tree" ? resolve_tree(rc) : TreeTemplate();
  const Prepared prep = prepare(rc, target);
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    PruningSettings s = rc.pruning;
    s.method = v == "full" ? kMethodTwoStage : v;
    make_plan_source(s, 0.0, 0);
    AblationRow row;
    row.variant = v;
    row.summary = run_ratio(rc, target, draft ? *draft : target, prep, s, rc.pruning.ratio, tree, nullptr);
    row.summary.method = v;
    rows.push_back(std::move(row));
  }
  double full = 0.0;
  bool have_full = false;
  for (const auto& r : rows) {
    if (r.variant == "full") {
      full = r.summary.tau;
      have_full = true;
    }
  }
  if (!have_full) {
    PruningSettings s = rc.pruning;
    s.method = kMethodTwoStage;
    full = run_ratio(rc, target, draft ? *draft : target, prep, s, rc.pruning.ratio, tree, nullptr).tau;
  }
  for (auto& r : rows) r.delta_tau = r.summary.tau - full;
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "variant,ratio,tau,delta_tau,tokens_per_s,measured_speedup\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.summary.ratio << ',' << r.summary.tau << ',' << r.delta_tau << ','
        << r.summary.tokens_per_s << ',' << r.summary.measured_speedup << '\n';
  }
}

void write_ablation_jsonl(std::ostream& out, const std::vector<AblationRow>& rows) {
  for (const auto& r : rows) {
    auto j = summary_json(r.summary);
    j["type"] = "ablation";
    j["variant"] = r.variant;
    j["delta_tau"] = r.delta_tau;
    out << j.dump() << '\n';
  }
}

std::vector<LatencyRow> latency_sweep(const Model& model, const std::vector<std::size_t>& lengths, int steps,
                                      int repeats) {
  if (steps < 1 || repeats < 1) throw ConfigError("latency sweep needs steps >= 1 and repeats >= 1");
  const auto max_pos = static_cast<std::size_t>(model.config().max_positions);
  std::vector<LatencyRow> rows;
  for (auto len : lengths) {
    if (len + static_cast<std::size_t>(steps) > max_pos) {
      throw ConfigError("context length " + std::to_string(len) + " plus " + std::to_string(steps) +
                        " decode steps exceeds max_positions " + std::to_string(max_pos));
    }
    auto cache = model.make_cache();
    std::vector<double> samples;
    for (int r = 0; r < repeats; ++r) {
      cache.fill_synthetic(len, 1234 + static_cast<std::uint64_t>(r));
      model.decode_step(cache, 0, static_cast<std::int64_t>(len));  // warm-up
      cache.rollback(len);
      Stopwatch sw;
      for (int i = 0; i < steps; ++i) {
        model.decode_step(cache, i % model.config().vocab_size, static_cast<std::int64_t>(len + i));
      }
      samples.push_back(sw.seconds() * 1e3 / steps);
    }
    std::sort(samples.begin(), samples.end());
    rows.push_back({len, samples[samples.size() / 2]});
  }
  return rows;
}

void write_latency_csv(std::ostream& out, const std::vector<LatencyRow>& rows) {
  out << "length,latency_ms\n";
  for (const auto& r : rows) out << r.length << ',' << r.mean_ms << '\n';
}

}  // namespace vidspec
