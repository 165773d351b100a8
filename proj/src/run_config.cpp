// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vidspec/common.hpp"
#include "vidspec/harness.hpp"

namespace vidspec {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void get(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

ModelSource parse_model(const json& j, const std::string& where) {
  check_keys(j, where,
             {"n_layers", "n_heads", "d_model", "vocab_size", "video_dim", "ffn_mult", "rope_theta", "max_positions",
              "seed", "checkpoint"});
  ModelSource m;
  get(j, "n_layers", m.config.n_layers);
  get(j, "n_heads", m.config.n_heads);
  get(j, "d_model", m.config.d_model);
  get(j, "vocab_size", m.config.vocab_size);
  get(j, "video_dim", m.config.video_dim);
  get(j, "ffn_mult", m.config.ffn_mult);
  get(j, "rope_theta", m.config.rope_theta);
  get(j, "max_positions", m.config.max_positions);
  get(j, "seed", m.config.seed);
  get(j, "checkpoint", m.checkpoint);
  return m;
}

json model_json(const ModelSource& m) {
  const auto& c = m.config;
  return {{"n_layers", c.n_layers},     {"n_heads", c.n_heads},       {"d_model", c.d_model},
          {"vocab_size", c.vocab_size}, {"video_dim", c.video_dim},   {"ffn_mult", c.ffn_mult},
          {"rope_theta", c.rope_theta}, {"max_positions", c.max_positions}, {"seed", c.seed},
          {"checkpoint", m.checkpoint}};
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig rc;
  auto& t = rc.target.config;
  t.n_layers = 8;
  t.n_heads = 8;
  t.d_model = 512;
  t.vocab_size = 256;
  t.video_dim = 64;
  t.max_positions = 32768;
  t.seed = 1;
  ModelSource d;
  d.config.n_layers = 2;
  d.config.n_heads = 4;
  d.config.d_model = 256;
  d.config.vocab_size = 256;
  d.config.video_dim = 64;
  d.config.max_positions = 32768;
  d.config.seed = 2;
  rc.draft = d;
  rc.pruning.lambda_r = kLambdaSeparateDraft;
  return rc;
}

void RunConfig::validate() const {
  if (schema_version != kRunConfigSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version) + " (expected " +
                      std::to_string(kRunConfigSchemaVersion) + ")");
  }
  target.config.validate();
  if (draft) {
    draft->config.validate();
    if (draft->config.vocab_size != target.config.vocab_size) throw ConfigError("draft and target vocabularies differ");
    if (draft->config.video_features() != target.config.video_features()) {
      throw ConfigError("draft and target video feature widths differ");
    }
  }
  if (mode != "vanilla" && mode != "sd-chain" && mode != "sd-tree") throw ConfigError("unknown mode " + mode);
  for (double r : ratios.empty() ? std::vector<double>{pruning.ratio} : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("pruning ratio must lie in [0, 1]");
  }
  if (!(pruning.lambda_r >= 0.0 && pruning.lambda_r <= 1.0)) throw ConfigError("lambda_r must lie in [0, 1]");
  if (mode == "sd-chain" && gamma < 1) throw ConfigError("gamma must be >= 1");
  if (n_generate < 1) throw ConfigError("n_generate must be >= 1");
  if (n_prompts < 1) throw ConfigError("n_prompts must be >= 1");
  workload.layout.validate();
  if (workload.n_language < 1) throw ConfigError("n_language must be >= 1");
  if (workload.kind == "planted") {
    workload.task.validate();
    if (workload.task.vocab_size != target.config.vocab_size ||
        workload.task.video_dim != target.config.video_features()) {
      throw ConfigError("planted task vocabulary/video width must match the target");
    }
  } else if (workload.kind != "random") {
    throw ConfigError("unknown workload kind " + workload.kind);
  }
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"schema_version", "target", "draft", "mode", "pruning", "ratios", "gamma", "tree", "n_generate",
              "n_prompts", "workload", "output", "csv_prefix", "step_records"});
  if (!j.contains("schema_version")) throw ConfigError("config needs a schema_version");
  RunConfig rc = RunConfig::defaults();
  get(j, "schema_version", rc.schema_version);
  if (rc.schema_version != kRunConfigSchemaVersion) rc.validate();
  if (j.contains("target")) rc.target = parse_model(j["target"], "target");
  if (j.contains("draft")) {
    if (j["draft"].is_string()) {
      if (j["draft"] != "self") throw ConfigError("draft must be an object or \"self\"");
      rc.draft.reset();
    } else {
      rc.draft = parse_model(j["draft"], "draft");
    }
  }
  get(j, "mode", rc.mode);
  // Unset lambda_r follows the draft kind: 0.4 with a separate draft, 0.5 self-drafting.
  rc.pruning.lambda_r = rc.draft ? kLambdaSeparateDraft : kLambdaSelfDraft;
  if (j.contains("pruning")) {
    const auto& p = j["pruning"];
    check_keys(p, "pruning", {"method", "ratio", "lambda_r", "seed"});
    get(p, "method", rc.pruning.method);
    get(p, "ratio", rc.pruning.ratio);
    get(p, "lambda_r", rc.pruning.lambda_r);
    get(p, "seed", rc.pruning.seed);
  }
  get(j, "ratios", rc.ratios);
  get(j, "gamma", rc.gamma);
  get(j, "tree", rc.tree);
  get(j, "n_generate", rc.n_generate);
  get(j, "n_prompts", rc.n_prompts);
  get(j, "output", rc.output);
  get(j, "csv_prefix", rc.csv_prefix);
  get(j, "step_records", rc.step_records);
  if (j.contains("workload")) {
    const auto& w = j["workload"];
    check_keys(w, "workload", {"kind", "frames", "height", "width", "n_language", "seed", "planted"});
    auto& ws = rc.workload;
    get(w, "kind", ws.kind);
    get(w, "frames", ws.layout.frames);
    get(w, "height", ws.layout.height);
    get(w, "width", ws.layout.width);
    get(w, "n_language", ws.n_language);
    get(w, "seed", ws.seed);
    if (w.contains("planted")) {
      const auto& p = w["planted"];
      check_keys(p, "workload.planted",
                 {"video_dim", "vocab_size", "n_patterns", "n_planted", "n_continuation", "noise_scale", "seed"});
      get(p, "video_dim", ws.task.video_dim);
      get(p, "vocab_size", ws.task.vocab_size);
      get(p, "n_patterns", ws.task.n_patterns);
      get(p, "n_planted", ws.task.n_planted);
      get(p, "n_continuation", ws.task.n_continuation);
      get(p, "noise_scale", ws.task.noise_scale);
      get(p, "seed", ws.task.seed);
    }
  }
  rc.workload.task.layout = rc.workload.layout;
  rc.workload.task.n_query = rc.workload.n_language;
  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& rc) {
  json j;
  j["schema_version"] = rc.schema_version;
  j["target"] = model_json(rc.target);
  j["draft"] = rc.draft ? model_json(*rc.draft) : json("self");
  j["mode"] = rc.mode;
  j["pruning"] = {{"method", rc.pruning.method},
                  {"ratio", rc.pruning.ratio},
                  {"lambda_r", rc.pruning.lambda_r},
                  {"seed", rc.pruning.seed}};
  j["ratios"] = rc.ratios;
  j["gamma"] = rc.gamma;
  j["tree"] = rc.tree;
  j["n_generate"] = rc.n_generate;
  j["n_prompts"] = rc.n_prompts;
  const auto& w = rc.workload;
  const auto& t = w.task;
  j["workload"] = {{"kind", w.kind},
                   {"frames", w.layout.frames},
                   {"height", w.layout.height},
                   {"width", w.layout.width},
                   {"n_language", w.n_language},
                   {"seed", w.seed},
                   {"planted",
                    {{"video_dim", t.video_dim},
                     {"vocab_size", t.vocab_size},
                     {"n_patterns", t.n_patterns},
                     {"n_planted", t.n_planted},
                     {"n_continuation", t.n_continuation},
                     {"noise_scale", t.noise_scale},
                     {"seed", t.seed}}}};
  j["output"] = rc.output;
  j["csv_prefix"] = rc.csv_prefix;
  j["step_records"] = rc.step_records;
  return j.dump(2);
}

void write_sequence(std::ostream& out, const MultimodalSequence& seq) {
  json j;
  j["format"] = "vidspec-sequence";
  j["version"] = 1;
  j["layout"] = {{"frames", seq.layout.frames}, {"height", seq.layout.height}, {"width", seq.layout.width}};
  j["positions"] = seq.positions;
  j["video_index"] = seq.video_index;
  j["pruned"] = seq.pruned;
  json items = json::array();
  for (const auto& it : seq.items) {
    if (it.modality == Modality::kLanguage) {
      items.push_back({{"token", it.token}});
    } else {
      items.push_back({{"video", it.embedding}});
    }
  }
  j["items"] = std::move(items);
  out << j.dump() << '\n';
}

MultimodalSequence read_sequence(std::istream& in) {
  json j;
  try {
    in >> j;
    if (j.value("format", "") != "vidspec-sequence" || j.value("version", 0) != 1) {
      throw ConfigError("not a vidspec sequence file");
    }
    MultimodalSequence seq;
    seq.layout.frames = j["layout"]["frames"];
    seq.layout.height = j["layout"]["height"];
    seq.layout.width = j["layout"]["width"];
    seq.positions = j["positions"].get<std::vector<std::int64_t>>();
    seq.video_index = j["video_index"].get<std::vector<std::size_t>>();
    seq.pruned = j["pruned"];
    for (const auto& it : j["items"]) {
      if (it.contains("token")) {
        seq.items.push_back(SequenceItem::language(it["token"]));
      } else {
        seq.items.push_back(SequenceItem::video(it["video"].get<std::vector<float>>()));
      }
    }
    seq.validate();
    return seq;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed sequence file: ") + e.what());
  }
}

}  // namespace vidspec
