// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidspec/specdec.hpp"

#include <algorithm>
#include <numeric>

#include "vidspec/common.hpp"

namespace vidspec {

std::vector<int> top_tokens(std::span<const float> logits, std::size_t count) {
  std::vector<int> ids(logits.size());
  std::iota(ids.begin(), ids.end(), 0);
  count = std::min(count, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(count), ids.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  ids.resize(count);
  return ids;
}

double predicted_speedup(double tau, int gamma, double t_d, double t_t, double t_t_gamma) {
  return tau / (gamma * (t_d / t_t) + t_t_gamma / t_t);
}

Metrics compute_metrics(const std::vector<StepStats>& stats, double vanilla_t_t, int gamma) {
  if (stats.empty()) throw ConfigError("metrics need at least one decoding step");
  Metrics m;
  m.gamma = gamma;
  double emitted = 0, draft = 0, verify = 0, wall = 0;
  for (const auto& s : stats) {
    emitted += s.accepted + 1;
    draft += s.draft_time;
    verify += s.verify_time;
    wall += s.step_time;
  }
  const auto steps = static_cast<double>(stats.size());
  m.tau = emitted / steps;
  m.mean_accepted = m.tau - 1.0;
  m.t_d = gamma > 0 ? draft / (gamma * steps) : 0.0;
  m.t_t_gamma = verify / steps;
  m.tokens_per_s = wall > 0 ? emitted / wall : 0.0;
  m.t_t = vanilla_t_t;
  if (vanilla_t_t > 0) {
    m.measured_speedup = m.tokens_per_s * vanilla_t_t;
    m.predicted_speedup = predicted_speedup(m.tau, gamma, m.t_d, m.t_t, m.t_t_gamma);
  }
  return m;
}

DecodeResult run_vanilla(const Model& target, const MultimodalSequence& prompt, int n) {
  if (n < 1) throw ConfigError("must generate at least one token");
  DecodeResult out;
  Stopwatch total;
  Stopwatch sw;
  auto pre = target.prefill(prompt);
  out.timings.target_prefill = sw.seconds();
  out.tokens.push_back(argmax(pre.logits));
  Stopwatch decode;
  double per_token = 0.0;
  std::int64_t pos = prompt.positions.back() + 1;
  for (int i = 1; i < n; ++i) {
    sw.reset();
    auto logits = target.decode_step(pre.cache, out.tokens.back(), pos++);
    out.tokens.push_back(argmax(logits));
    per_token += sw.seconds();
  }
  out.timings.decode = decode.seconds();
  out.timings.total = total.seconds();
  out.metrics.t_t = n > 1 ? per_token / (n - 1) : 0.0;
  out.metrics.tokens_per_s = out.metrics.t_t > 0 ? 1.0 / out.metrics.t_t : 0.0;
  return out;
}

PlanSource PlanSource::fixed(PruningPlan plan) {
  return {[plan = std::move(plan)](const MultimodalSequence&, const AttentionCapture*) { return plan; }, false};
}

namespace {

struct Session {
  const Model& target;
  const Model& draft;
  KvCache tcache;
  KvCache dcache;
  std::int64_t first_gen_position = 0;  // position of output token 0
  std::vector<int> tokens;
  std::vector<int> pending;  // committed tokens not yet in the draft cache

  std::int64_t position_of(std::size_t output_index) const {
    return first_gen_position + static_cast<std::int64_t>(output_index);
  }
  std::int64_t pending_position() const { return position_of(tokens.size() - pending.size()); }
};

StepStats chain_step(Session& s, int gamma) {
  StepStats st;
  Stopwatch sw;
  auto rows = s.draft.forward_chain(s.dcache, s.pending, s.pending_position());
  std::vector<int> drafted = {argmax(rows.back())};
  const std::int64_t t_last_pos = s.position_of(s.tokens.size() - 1);
  for (int k = 1; k < gamma; ++k) {
    auto logits = s.draft.decode_step(s.dcache, drafted.back(), t_last_pos + k);
    drafted.push_back(argmax(logits));
  }
  st.draft_time = sw.seconds();

  sw.reset();
  std::vector<int> verify = {s.tokens.back()};
  verify.insert(verify.end(), drafted.begin(), drafted.end());
  const std::size_t tbase = s.tcache.length();
  auto vrows = s.target.forward_chain(s.tcache, verify, t_last_pos);
  st.verify_time = sw.seconds();

  int a = 0;
  while (a < gamma && drafted[a] == argmax(vrows[a])) ++a;
  const int bonus = argmax(vrows[a]);
  s.tcache.rollback(tbase + 1 + a);
  const std::size_t dbase = s.dcache.length() - static_cast<std::size_t>(gamma - 1);
  s.dcache.rollback(dbase + static_cast<std::size_t>(std::min(a, gamma - 1)));
  s.pending.clear();
  if (a == gamma) s.pending.push_back(drafted[gamma - 1]);
  s.pending.push_back(bonus);
  s.tokens.insert(s.tokens.end(), drafted.begin(), drafted.begin() + a);
  s.tokens.push_back(bonus);
  st.accepted = a;
  return st;
}

StepStats tree_step(Session& s, const TreeTemplate& tree) {
  StepStats st;
  const std::size_t n_nodes = tree.size();
  Stopwatch sw;
  auto rows = s.draft.forward_chain(s.dcache, s.pending, s.pending_position());
  const std::vector<float> root_logits = std::move(rows.back());
  const std::int64_t t_last_pos = s.position_of(s.tokens.size() - 1);
  const std::size_t dbase = s.dcache.length();

  constexpr std::size_t kNoSlot = static_cast<std::size_t>(-1);
  std::vector<int> node_token(n_nodes, -1);
  std::vector<std::size_t> node_slot(n_nodes, kNoSlot);
  std::vector<std::vector<float>> node_logits(n_nodes);
  // Ranked candidates per parent (index 0 = root), computed on first use.
  std::vector<std::vector<int>> ranked(n_nodes + 1);
  auto ranked_for = [&](int parent) -> const std::vector<int>& {
    auto& r = ranked[parent + 1];
    if (r.empty()) {
      int need = 0;
      for (int c : tree.children(parent)) need = std::max(need, tree.nodes()[c].rank + 1);
      r = top_tokens(parent < 0 ? std::span<const float>(root_logits) : std::span<const float>(node_logits[parent]),
                     static_cast<std::size_t>(need));
    }
    return r;
  };

  for (int depth = 1; depth <= tree.max_depth(); ++depth) {
    std::vector<int> expand;
    for (std::size_t i = 0; i < n_nodes; ++i) {
      if (tree.depth(i) != depth) continue;
      const auto& node = tree.nodes()[i];
      node_token[i] = ranked_for(node.parent)[node.rank];
      if (tree.has_children(i)) expand.push_back(static_cast<int>(i));
    }
    if (expand.empty()) continue;
    std::vector<RowInput> inputs;
    std::vector<std::int64_t> positions;
    std::vector<Model::Visibility> vis;
    std::vector<std::size_t> logit_rows;
    for (std::size_t k = 0; k < expand.size(); ++k) {
      const int i = expand[k];
      inputs.push_back(RowInput::language(node_token[i]));
      positions.push_back(t_last_pos + depth);
      Model::Visibility v{dbase, {}};
      for (int p = tree.nodes()[i].parent; p >= 0; p = tree.nodes()[p].parent) v.extra.push_back(node_slot[p]);
      std::reverse(v.extra.begin(), v.extra.end());
      node_slot[i] = s.dcache.length() + k;
      v.extra.push_back(node_slot[i]);
      vis.push_back(std::move(v));
      logit_rows.push_back(k);
    }
    auto out = s.draft.forward_rows(s.dcache, inputs, positions, vis, logit_rows);
    for (std::size_t k = 0; k < expand.size(); ++k) node_logits[expand[k]] = std::move(out[k]);
  }
  st.draft_time = sw.seconds();

  sw.reset();
  std::vector<int> vtokens = {s.tokens.back()};
  std::vector<std::int64_t> vpos = {t_last_pos};
  std::vector<std::vector<std::uint8_t>> mask(n_nodes + 1, std::vector<std::uint8_t>(n_nodes + 1, 0));
  mask[0][0] = 1;
  for (std::size_t i = 0; i < n_nodes; ++i) {
    vtokens.push_back(node_token[i]);
    vpos.push_back(t_last_pos + tree.depth(i));
    mask[i + 1] = mask[tree.nodes()[i].parent + 1];
    mask[i + 1][i + 1] = 1;
  }
  const std::size_t tbase = s.tcache.length();
  auto vrows = s.target.forward_tree(s.tcache, vtokens, vpos, mask);
  st.verify_time = sw.seconds();

  std::vector<int> path;
  int cur = -1;
  for (;;) {
    const int want = argmax(vrows[cur + 1]);
    int next = -1;
    for (int c : tree.children(cur)) {
      if (node_token[c] == want) {
        next = c;
        break;
      }
    }
    if (next < 0) break;
    path.push_back(next);
    cur = next;
  }
  const int bonus = argmax(vrows[cur + 1]);

  std::vector<std::size_t> tkeep(tbase + 1);
  std::iota(tkeep.begin(), tkeep.end(), std::size_t{0});
  for (int c : path) tkeep.push_back(tbase + 1 + c);
  s.tcache.rollback(tkeep);

  std::vector<std::size_t> dkeep(dbase);
  std::iota(dkeep.begin(), dkeep.end(), std::size_t{0});
  s.pending.clear();
  for (int c : path) {
    if (node_slot[c] != kNoSlot) {
      dkeep.push_back(node_slot[c]);
    } else {
      s.pending.push_back(node_token[c]);
    }
  }
  s.dcache.rollback(dkeep);
  s.pending.push_back(bonus);
  for (int c : path) s.tokens.push_back(node_token[c]);
  s.tokens.push_back(bonus);
  st.accepted = static_cast<int>(path.size());
  return st;
}

}  // namespace

DecodeResult run_speculative(const Model& target, const Model& draft, const MultimodalSequence& prompt,
                             const PlanSource& plan_source, const SpeculativeOptions& opt, int n) {
  if (n < 1) throw ConfigError("must generate at least one token");
  if (target.config().vocab_size != draft.config().vocab_size) {
    throw ConfigError("draft and target must share a vocabulary");
  }
  if (opt.shape == DraftShape::kChain && opt.gamma < 1) throw ConfigError("gamma must be >= 1");
  if (opt.shape == DraftShape::kTree) {
    if (opt.tree.size() == 0) throw ConfigError("tree template is empty");
    if (opt.tree.max_rank() >= draft.config().vocab_size) {
      throw ConfigError("tree template rank exceeds the vocabulary");
    }
  }
  if (prompt.items.empty()) throw ShapeError("empty prompt");

  DecodeResult out;
  Stopwatch total;
  Stopwatch sw;
  const std::size_t capture_row = std::min(prompt.num_video(), prompt.size() - 1);
  auto tpre = target.prefill(prompt, plan_source.needs_capture, capture_row);
  out.timings.target_prefill = sw.seconds();

  sw.reset();
  out.plan = plan_source.build(prompt, tpre.capture ? &*tpre.capture : nullptr);
  tpre.capture.reset();
  auto draft_prompt = apply_plan(prompt, *out.plan);
  out.timings.pruning = sw.seconds();

  sw.reset();
  auto dpre = draft.prefill(draft_prompt);
  out.timings.draft_prefill = sw.seconds();

  Session s{target, draft, std::move(tpre.cache), std::move(dpre.cache), prompt.positions.back() + 1, {}, {}};
  s.tokens.push_back(argmax(tpre.logits));
  s.pending.push_back(s.tokens.back());

  Stopwatch decode;
  while (s.tokens.size() < static_cast<std::size_t>(n)) {
    Stopwatch step;
    StepStats st = opt.shape == DraftShape::kChain ? chain_step(s, opt.gamma) : tree_step(s, opt.tree);
    st.step_time = step.seconds();
    st.step_index = static_cast<int>(out.steps.size());
    out.steps.push_back(st);
  }
  out.timings.decode = decode.seconds();
  s.tokens.resize(static_cast<std::size_t>(n));
  out.tokens = std::move(s.tokens);
  if (!out.steps.empty()) {
    const int gamma = opt.shape == DraftShape::kChain ? opt.gamma : opt.tree.max_depth();
    out.metrics = compute_metrics(out.steps, opt.vanilla_t_t, gamma);
  }
  out.timings.total = total.seconds();
  return out;
}

DecodeResult run_sd_chain(const Model& target, const Model& draft, const MultimodalSequence& prompt,
                          const PruningPlan& plan, int gamma, int n) {
  SpeculativeOptions opt;
  opt.shape = DraftShape::kChain;
  opt.gamma = gamma;
  return run_speculative(target, draft, prompt, PlanSource::fixed(plan), opt, n);
}

DecodeResult run_sd_tree(const Model& target, const Model& draft, const MultimodalSequence& prompt,
                         const PruningPlan& plan, const TreeTemplate& tree, int n) {
  SpeculativeOptions opt;
  opt.shape = DraftShape::kTree;
  opt.tree = tree;
  return run_speculative(target, draft, prompt, PlanSource::fixed(plan), opt, n);
}

}  // namespace vidspec
