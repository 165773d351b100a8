// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include "vidspec/trainer.hpp"

#include <cmath>
#include <random>

#include "vidspec/common.hpp"
#include "vidspec/guidance.hpp"

namespace vidspec {

void TrainConfig::validate() const {
  task.validate();
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
}

ModelConfig toy_model_config(const PlantedTask& task, std::uint64_t seed) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_model = 64;
  c.vocab_size = task.vocab_size;
  c.video_dim = task.video_dim;
  c.max_positions = 1024;
  c.seed = seed;
  return c;
}

TrainExample make_example(const PlantedTask& task, std::uint64_t sample_seed) {
  auto s = task.sample(sample_seed, task.n_query + task.n_continuation);
  const auto succ = task.successors()[s.spec.pattern];
  TrainExample ex;
  ex.targets.assign(s.prompt.size(), -1);
  for (std::size_t i = s.prompt.num_video(); i < s.prompt.size(); ++i) ex.targets[i] = succ[s.prompt.items[i].token];
  ex.sequence = std::move(s.prompt);
  return ex;
}

ParamSet to_params(const ModelConfig& config, const ModelWeights& weights) {
  ModelWeights copy = weights;
  ParamSet out;
  for (const auto& t : copy.tensors(config)) out.emplace_back(t.data->begin(), t.data->end());
  return out;
}

ModelWeights from_params(const ModelConfig& config, const ParamSet& params) {
  ModelWeights w;
  w.layers.resize(config.n_layers);
  auto refs = w.tensors(config);
  if (refs.size() != params.size()) throw ShapeError("parameter count does not match config");
  for (std::size_t i = 0; i < refs.size(); ++i) refs[i].data->assign(params[i].begin(), params[i].end());
  return w;
}

namespace {

constexpr double kEps = 1e-5;

struct Dims {
  int d, nh, dh, f, vocab, vd, layers;
  explicit Dims(const ModelConfig& c)
      : d(c.d_model), nh(c.n_heads), dh(c.d_head()), f(c.d_ffn()), vocab(c.vocab_size), vd(c.video_features()),
        layers(c.n_layers) {}
};

// y = W x, W is rows x cols
void matvec(const std::vector<double>& w, int rows, int cols, const double* x, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int k = 0; k < cols; ++k) acc += wr[k] * x[k];
    y[r] = acc;
  }
}

// gx += W^T gy and gw += gy x^T
void matvec_back(const std::vector<double>& w, int rows, int cols, const double* x, const double* gy, double* gx,
                 std::vector<double>& gw) {
  for (int r = 0; r < rows; ++r) {
    const double g = gy[r];
    if (g == 0.0) continue;
    const double* wr = w.data() + static_cast<std::size_t>(r) * cols;
    double* gwr = gw.data() + static_cast<std::size_t>(r) * cols;
    for (int k = 0; k < cols; ++k) {
      if (gx) gx[k] += wr[k] * g;
      gwr[k] += g * x[k];
    }
  }
}

double rms_forward(const double* x, const std::vector<double>& g, int d, double* y) {
  double ms = 0.0;
  for (int k = 0; k < d; ++k) ms += x[k] * x[k];
  const double r = 1.0 / std::sqrt(ms / d + kEps);
  for (int k = 0; k < d; ++k) y[k] = x[k] * r * g[k];
  return r;
}

void rms_backward(const double* x, double r, const std::vector<double>& g, const double* dy, int d, double* dx,
                  std::vector<double>& dg) {
  double t = 0.0;
  for (int k = 0; k < d; ++k) {
    dg[k] += dy[k] * x[k] * r;
    t += dy[k] * g[k] * x[k];
  }
  const double c = r * r * r * t / d;
  for (int k = 0; k < d; ++k) dx[k] += r * g[k] * dy[k] - x[k] * c;
}

void rope(double* v, const Dims& dm, const std::vector<double>& freq, std::int64_t pos, bool inverse) {
  for (int h = 0; h < dm.nh; ++h) {
    for (int k = 0; k < dm.dh / 2; ++k) {
      const double ang = static_cast<double>(pos) * freq[k];
      const double c = std::cos(ang), s = inverse ? -std::sin(ang) : std::sin(ang);
      double& a = v[h * dm.dh + 2 * k];
      double& b = v[h * dm.dh + 2 * k + 1];
      const double a0 = a, b0 = b;
      a = a0 * c - b0 * s;
      b = a0 * s + b0 * c;
    }
  }
}

struct LayerActs {
  std::vector<double> x_in, r1, h1, q, k, v, p, att, x_mid, r2, h2, up, act;
};

}  // namespace

double loss_and_gradient(const ModelConfig& config, const ParamSet& P, const TrainExample& ex, ParamSet* grad) {
  const Dims dm(config);
  const std::size_t n = ex.sequence.size();
  const int d = dm.d, f = dm.f;
  const std::size_t base_final = 2 + 8 * static_cast<std::size_t>(dm.layers);
  if (P.size() != base_final + 2) throw ShapeError("parameter count does not match config");
  if (ex.targets.size() != n) throw ShapeError("targets must cover every row");

  std::vector<double> freq(dm.dh / 2);
  for (int k = 0; k < dm.dh / 2; ++k) freq[k] = std::pow(config.rope_theta, -2.0 * k / dm.dh);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dm.dh));

  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = ex.sequence.items[i];
    if (item.modality == Modality::kLanguage) {
      for (int k = 0; k < d; ++k) x[i * d + k] = P[0][static_cast<std::size_t>(item.token) * d + k];
    } else {
      std::vector<double> e(item.embedding.begin(), item.embedding.end());
      matvec(P[1], d, dm.vd, e.data(), &x[i * d]);
    }
  }

  std::vector<LayerActs> acts(dm.layers);
  for (int l = 0; l < dm.layers; ++l) {
    const std::size_t b = 2 + 8 * static_cast<std::size_t>(l);
    auto& A = acts[l];
    A.x_in = x;
    A.r1.resize(n);
    A.h1.resize(n * d);
    A.q.resize(n * d);
    A.k.resize(n * d);
    A.v.resize(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      A.r1[i] = rms_forward(&x[i * d], P[b], d, &A.h1[i * d]);
      matvec(P[b + 1], d, d, &A.h1[i * d], &A.q[i * d]);
      matvec(P[b + 2], d, d, &A.h1[i * d], &A.k[i * d]);
      matvec(P[b + 3], d, d, &A.h1[i * d], &A.v[i * d]);
      rope(&A.q[i * d], dm, freq, ex.sequence.positions[i], false);
      rope(&A.k[i * d], dm, freq, ex.sequence.positions[i], false);
    }
    A.p.assign(static_cast<std::size_t>(dm.nh) * n * n, 0.0);
    A.att.assign(n * d, 0.0);
    for (int h = 0; h < dm.nh; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        double* p = &A.p[(h * n + i) * n];
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (int t = 0; t < dm.dh; ++t) s += A.q[i * d + h * dm.dh + t] * A.k[j * d + h * dm.dh + t];
          p[j] = s * scale;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) z += (p[j] = std::exp(p[j] - mx));
        for (std::size_t j = 0; j <= i; ++j) {
          p[j] /= z;
          for (int t = 0; t < dm.dh; ++t) A.att[i * d + h * dm.dh + t] += p[j] * A.v[j * d + h * dm.dh + t];
        }
      }
    }
    std::vector<double> o(d);
    for (std::size_t i = 0; i < n; ++i) {
      matvec(P[b + 4], d, d, &A.att[i * d], o.data());
      for (int k = 0; k < d; ++k) x[i * d + k] += o[k];
    }
    A.x_mid = x;
    A.r2.resize(n);
    A.h2.resize(n * d);
    A.up.resize(n * f);
    A.act.resize(n * f);
    for (std::size_t i = 0; i < n; ++i) {
      A.r2[i] = rms_forward(&x[i * d], P[b + 5], d, &A.h2[i * d]);
      matvec(P[b + 6], f, d, &A.h2[i * d], &A.up[i * f]);
      for (int k = 0; k < f; ++k) {
        const double z = A.up[i * f + k];
        A.act[i * f + k] = z / (1.0 + std::exp(-z));
      }
      matvec(P[b + 7], d, f, &A.act[i * f], o.data());
      for (int k = 0; k < d; ++k) x[i * d + k] += o[k];
    }
  }

  std::size_t count = 0;
  for (int t : ex.targets) count += t >= 0;
  if (count == 0) throw ConfigError("training example has no targets");

  if (grad) {
    grad->resize(P.size());
    for (std::size_t i = 0; i < P.size(); ++i) (*grad)[i].assign(P[i].size(), 0.0);
  }
  std::vector<double> dx(n * d, 0.0);
  double loss = 0.0;
  std::vector<double> hf(d), logits(dm.vocab), dhf(d);
  for (std::size_t i = 0; i < n; ++i) {
    const int target = ex.targets[i];
    if (target < 0) continue;
    const double r = rms_forward(&x[i * d], P[base_final], d, hf.data());
    matvec(P[base_final + 1], dm.vocab, d, hf.data(), logits.data());
    double mx = -1e300;
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : logits) z += (v = std::exp(v - mx));
    loss += -std::log(logits[target] / z);
    if (!grad) continue;
    for (int c = 0; c < dm.vocab; ++c) logits[c] = (logits[c] / z - (c == target ? 1.0 : 0.0)) / count;
    std::fill(dhf.begin(), dhf.end(), 0.0);
    matvec_back(P[base_final + 1], dm.vocab, d, hf.data(), logits.data(), dhf.data(), (*grad)[base_final + 1]);
    rms_backward(&x[i * d], r, P[base_final], dhf.data(), d, &dx[i * d], (*grad)[base_final]);
  }
  loss /= static_cast<double>(count);
  if (!grad) return loss;

  auto& G = *grad;
  std::vector<double> dout(d), dact(f), dh(d);
  for (int l = dm.layers - 1; l >= 0; --l) {
    const std::size_t b = 2 + 8 * static_cast<std::size_t>(l);
    const auto& A = acts[l];
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(&dx[i * d], &dx[i * d] + d, dout.begin());
      std::fill(dact.begin(), dact.end(), 0.0);
      matvec_back(P[b + 7], d, f, &A.act[i * f], dout.data(), dact.data(), G[b + 7]);
      for (int k = 0; k < f; ++k) {
        const double z = A.up[i * f + k];
        const double s = 1.0 / (1.0 + std::exp(-z));
        dact[k] *= s + z * s * (1.0 - s);
      }
      std::fill(dh.begin(), dh.end(), 0.0);
      matvec_back(P[b + 6], f, d, &A.h2[i * d], dact.data(), dh.data(), G[b + 6]);
      rms_backward(&A.x_mid[i * d], A.r2[i], P[b + 5], dh.data(), d, &dx[i * d], G[b + 5]);
    }
    std::vector<double> datt(n * d, 0.0), dq(n * d, 0.0), dk(n * d, 0.0), dv(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) matvec_back(P[b + 4], d, d, &A.att[i * d], &dx[i * d], &datt[i * d], G[b + 4]);
    std::vector<double> dp(n);
    for (int h = 0; h < dm.nh; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = &A.p[(h * n + i) * n];
        const double* ga = &datt[i * d + h * dm.dh];
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          double acc = 0.0;
          for (int t = 0; t < dm.dh; ++t) {
            acc += ga[t] * A.v[j * d + h * dm.dh + t];
            dv[j * d + h * dm.dh + t] += p[j] * ga[t];
          }
          dp[j] = acc;
          sum += p[j] * acc;
        }
        for (std::size_t j = 0; j <= i; ++j) {
          const double ds = p[j] * (dp[j] - sum) * scale;
          if (ds == 0.0) continue;
          for (int t = 0; t < dm.dh; ++t) {
            dq[i * d + h * dm.dh + t] += ds * A.k[j * d + h * dm.dh + t];
            dk[j * d + h * dm.dh + t] += ds * A.q[i * d + h * dm.dh + t];
          }
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      rope(&dq[i * d], dm, freq, ex.sequence.positions[i], true);
      rope(&dk[i * d], dm, freq, ex.sequence.positions[i], true);
      std::fill(dh.begin(), dh.end(), 0.0);
      matvec_back(P[b + 1], d, d, &A.h1[i * d], &dq[i * d], dh.data(), G[b + 1]);
      matvec_back(P[b + 2], d, d, &A.h1[i * d], &dk[i * d], dh.data(), G[b + 2]);
      matvec_back(P[b + 3], d, d, &A.h1[i * d], &dv[i * d], dh.data(), G[b + 3]);
      rms_backward(&A.x_in[i * d], A.r1[i], P[b], dh.data(), d, &dx[i * d], G[b]);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = ex.sequence.items[i];
    if (item.modality == Modality::kLanguage) {
      for (int k = 0; k < d; ++k) G[0][static_cast<std::size_t>(item.token) * d + k] += dx[i * d + k];
    } else {
      std::vector<double> e(item.embedding.begin(), item.embedding.end());
      matvec_back(P[1], d, dm.vd, e.data(), &dx[i * d], nullptr, G[1]);
    }
  }
  return loss;
}

TrainResult train_toy(const Model& model, const TrainConfig& cfg,
                      const std::function<void(int, double)>& on_step) {
  cfg.validate();
  const auto& mc = model.config();
  if (mc.vocab_size != cfg.task.vocab_size || mc.video_features() != cfg.task.video_dim) {
    throw ConfigError("model does not match the task's vocabulary or video width");
  }
  TrainResult out{model, {}};
  if (cfg.steps == 0) return out;

  ParamSet params = to_params(mc, model.weights());
  ParamSet m(params.size()), v(params.size()), g, acc(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i].assign(params[i].size(), 0.0);
    v[i].assign(params[i].size(), 0.0);
  }
  std::mt19937_64 rng(cfg.seed);
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int step = 0; step < cfg.steps; ++step) {
    for (std::size_t i = 0; i < params.size(); ++i) acc[i].assign(params[i].size(), 0.0);
    double loss = 0.0;
    for (int e = 0; e < cfg.batch; ++e) {
      const auto ex = make_example(cfg.task, rng());
      loss += loss_and_gradient(mc, params, ex, &g);
      for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < g[i].size(); ++j) acc[i][j] += g[i][j];
    }
    loss /= cfg.batch;
    if (!std::isfinite(loss)) {
      throw TrainingDivergence("training diverged at step " + std::to_string(step) + " (loss " +
                               std::to_string(loss) + "); lower the learning rate");
    }
    double norm = 0.0;
    for (auto& t : acc)
      for (auto& x : t) {
        x /= cfg.batch;
        norm += x * x;
      }
    norm = std::sqrt(norm);
    const double clip = cfg.grad_clip > 0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
    const double c1 = 1.0 - std::pow(b1, step + 1), c2 = 1.0 - std::pow(b2, step + 1);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < params[i].size(); ++j) {
        const double gr = acc[i][j] * clip;
        m[i][j] = b1 * m[i][j] + (1 - b1) * gr;
        v[i][j] = b2 * v[i][j] + (1 - b2) * gr * gr;
        params[i][j] -= cfg.lr * (m[i][j] / c1) / (std::sqrt(v[i][j] / c2) + eps);
      }
    }
    out.losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  out.model = Model(mc, from_params(mc, params));
  return out;
}

double planted_guidance_ratio(const Model& model, const PlantedTask& task, int n_prompts, std::uint64_t first_seed) {
  double planted = 0.0, rest = 0.0;
  std::size_t n_planted = 0, n_rest = 0;
  for (int p = 0; p < n_prompts; ++p) {
    const auto s = task.sample(first_seed + static_cast<std::uint64_t>(p));
    const auto pre = model.prefill(s.prompt, true, s.prompt.num_video());
    const auto scores = score_tokens(extract_guidance(*pre.capture, s.prompt));
    std::vector<char> is_planted(scores.scores.size(), 0);
    for (auto i : s.spec.planted) is_planted[i] = 1;
    for (std::size_t i = 0; i < scores.scores.size(); ++i) {
      if (is_planted[i]) {
        planted += scores.scores[i];
        ++n_planted;
      } else {
        rest += scores.scores[i];
        ++n_rest;
      }
    }
  }
  if (n_planted == 0 || n_rest == 0 || rest == 0.0) throw ConfigError("guidance ratio is undefined for this task");
  return (planted / n_planted) / (rest / n_rest);
}

}  // namespace vidspec
