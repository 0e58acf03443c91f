// Copyright 2026 The avrel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "avrel/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "avrel/ops.hpp"

namespace avrel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

std::vector<double> row_log_softmax(std::span<const double> x, std::size_t T, std::size_t V) {
  std::vector<double> out(T * V);
  for (std::size_t t = 0; t < T; ++t) {
    const double* r = x.data() + t * V;
    const double m = *std::max_element(r, r + V);
    double s = 0.0;
    for (std::size_t k = 0; k < V; ++k) s += std::exp(r[k] - m);
    const double l = m + std::log(s);
    for (std::size_t k = 0; k < V; ++k) out[t * V + k] = r[k] - l;
  }
  return out;
}

std::vector<std::int64_t> extended_labels(std::span<const std::int64_t> labels, std::size_t T,
                                          std::size_t V, std::int64_t blank) {
  std::size_t repeats = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == blank || labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= V) {
      throw Error("vocab", "ctc_loss: label " + std::to_string(labels[i]) +
                               " is blank or outside the vocabulary");
    }
    if (i && labels[i] == labels[i - 1]) ++repeats;
  }
  if (T < labels.size() + repeats) {
    throw SizingError("ctc_loss: infeasible alignment, " + std::to_string(labels.size()) +
                      " labels with " + std::to_string(repeats) + " repeats need at least " +
                      std::to_string(labels.size() + repeats) + " frames, got " +
                      std::to_string(T));
  }
  std::vector<std::int64_t> ext(2 * labels.size() + 1, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  return ext;
}

// alpha[t * S + s]; log domain.
std::vector<double> ctc_alpha(const std::vector<double>& lp, std::size_t T, std::size_t V,
                              const std::vector<std::int64_t>& ext) {
  const std::size_t S = ext.size();
  std::vector<double> a(T * S, kNegInf);
  a[0] = lp[static_cast<std::size_t>(ext[0])];
  if (S > 1) a[1] = lp[static_cast<std::size_t>(ext[1])];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double v = a[(t - 1) * S + s];
      if (s >= 1) v = lse(v, a[(t - 1) * S + s - 1]);
      if (s >= 2 && ext[s] != ext[s - 2]) v = lse(v, a[(t - 1) * S + s - 2]);
      if (v != kNegInf) a[t * S + s] = v + lp[t * V + static_cast<std::size_t>(ext[s])];
    }
  }
  return a;
}

double ctc_total(const std::vector<double>& alpha, std::size_t T, std::size_t S) {
  double p = alpha[(T - 1) * S + S - 1];
  if (S > 1) p = lse(p, alpha[(T - 1) * S + S - 2]);
  return p;
}

}  // namespace

double ctc_neg_log_likelihood(std::span<const double> log_probs, std::size_t T, std::size_t V,
                              std::span<const std::int64_t> labels, std::int64_t blank) {
  if (T == 0 || log_probs.size() != T * V) throw ShapeError("ctc: log-prob table size mismatch");
  const auto ext = extended_labels(labels, T, V, blank);
  std::vector<double> lp(log_probs.begin(), log_probs.end());
  return -ctc_total(ctc_alpha(lp, T, V, ext), T, ext.size());
}

Tensor ctc_loss(const Tensor& logits, std::span<const std::int64_t> labels, std::int64_t blank) {
  if (logits.rank() != 2) {
    throw ShapeError("ctc_loss: logits must be [T x V], got " + shape_str(logits.shape()));
  }
  const std::size_t T = logits.dim(0), V = logits.dim(1);
  if (blank < 0 || static_cast<std::size_t>(blank) >= V) throw Error("vocab", "ctc_loss: blank outside vocabulary");
  const auto ext = extended_labels(labels, T, V, blank);
  const std::size_t S = ext.size();
  auto lp = row_log_softmax(logits.values(), T, V);
  auto alpha = ctc_alpha(lp, T, V, ext);
  const double logp = ctc_total(alpha, T, S);
  if (!std::isfinite(logp)) throw NumericError("ctc_loss: alignment probability underflowed");

  return make_op_result(
      "ctc_loss", {1}, {-logp}, {logits},
      [T, V, S, ext, lp, alpha, logp](const BackwardContext& ctx) {
        Tensor x = ctx.inputs[0];
        if (!x.requires_grad()) return;
        std::vector<double> beta(T * S, kNegInf);
        beta[(T - 1) * S + S - 1] = lp[(T - 1) * V + static_cast<std::size_t>(ext[S - 1])];
        if (S > 1) beta[(T - 1) * S + S - 2] = lp[(T - 1) * V + static_cast<std::size_t>(ext[S - 2])];
        for (std::size_t t = T - 1; t-- > 0;) {
          for (std::size_t s = 0; s < S; ++s) {
            double v = beta[(t + 1) * S + s];
            if (s + 1 < S) v = lse(v, beta[(t + 1) * S + s + 1]);
            if (s + 2 < S && ext[s + 2] != ext[s]) v = lse(v, beta[(t + 1) * S + s + 2]);
            if (v != kNegInf) beta[t * S + s] = v + lp[t * V + static_cast<std::size_t>(ext[s])];
          }
        }
        const double g = ctx.out_grad[0];
        auto gx = x.mutable_grad();
        std::vector<double> occ(V);
        for (std::size_t t = 0; t < T; ++t) {
          std::fill(occ.begin(), occ.end(), 0.0);
          for (std::size_t s = 0; s < S; ++s) {
            const double a = alpha[t * S + s], b = beta[t * S + s];
            if (a == kNegInf || b == kNegInf) continue;
            const auto k = static_cast<std::size_t>(ext[s]);
            occ[k] += std::exp(a + b - lp[t * V + k] - logp);
          }
          for (std::size_t k = 0; k < V; ++k) gx[t * V + k] += g * (std::exp(lp[t * V + k]) - occ[k]);
        }
      });
}

Tensor attention_loss(const Tensor& logits, std::span<const std::int64_t> targets) {
  if (logits.rank() != 2) {
    throw ShapeError("attention_loss: logits must be [J x V], got " + shape_str(logits.shape()));
  }
  const std::size_t J = logits.dim(0), V = logits.dim(1);
  if (targets.size() != J) {
    throw ShapeError("attention_loss: " + std::to_string(J) + " logit rows but " +
                     std::to_string(targets.size()) + " targets");
  }
  for (auto y : targets) {
    if (y < 0 || static_cast<std::size_t>(y) >= V) {
      throw Error("vocab", "attention_loss: target " + std::to_string(y) + " outside vocabulary");
    }
  }
  auto lp = row_log_softmax(logits.values(), J, V);
  double loss = 0.0;
  for (std::size_t j = 0; j < J; ++j) loss -= lp[j * V + static_cast<std::size_t>(targets[j])];
  loss /= static_cast<double>(J);
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  return make_op_result("attention_loss", {1}, {loss}, {logits},
                        [J, V, lp, tgt](const BackwardContext& ctx) {
                          Tensor x = ctx.inputs[0];
                          if (!x.requires_grad()) return;
                          const double g = ctx.out_grad[0] / static_cast<double>(J);
                          auto gx = x.mutable_grad();
                          for (std::size_t j = 0; j < J; ++j) {
                            for (std::size_t k = 0; k < V; ++k) {
                              const double onehot = static_cast<std::int64_t>(k) == tgt[j] ? 1.0 : 0.0;
                              gx[j * V + k] += g * (std::exp(lp[j * V + k]) - onehot);
                            }
                          }
                        });
}

Tensor joint_loss(const Tensor& l_att, const Tensor& l_ctc, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda", "lambda must be in [0,1]");
  return ops::add(ops::scale(l_att, lambda), ops::scale(l_ctc, 1.0 - lambda));
}

double joint_loss(double l_att, double l_ctc, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda", "lambda must be in [0,1]");
  return lambda * l_att + (1.0 - lambda) * l_ctc;
}

double lr_schedule(std::size_t step, double peak, std::size_t warmup) {
  if (step < 1) throw ConfigError("step", "lr_schedule: step must be >= 1");
  if (warmup < 1) throw ConfigError("warmup_steps", "warmup_steps must be >= 1");
  if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  return peak * std::sqrt(static_cast<double>(warmup) / static_cast<double>(step));
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(std::span<Parameter> params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0)) throw ConfigError("beta1", "beta1 must be in (0,1)");
  if (!(cfg.beta2 > 0.0 && cfg.beta2 < 1.0)) throw ConfigError("beta2", "beta2 must be in (0,1)");
  if (!(cfg.eps > 0.0)) throw ConfigError("adam_eps", "adam_eps must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter " + p.name);
    }
  }
  ++step_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto w = p.tensor.mutable_values();
    const bool has = p.tensor.has_grad();
    const auto g = has ? p.tensor.grad() : std::span<const double>{};
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has ? g[j] : 0.0;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

double clip_grad_norm(std::span<Parameter> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= f;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda", "lambda must be in [0,1]");
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr", "peak_lr must be positive");
  if (warmup_steps < 1) throw ConfigError("warmup_steps", "warmup_steps must be >= 1");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0)) throw ConfigError("beta1", "beta1 must be in (0,1)");
  if (!(adam.beta2 > 0.0 && adam.beta2 < 1.0)) throw ConfigError("beta2", "beta2 must be in (0,1)");
  if (!(adam.eps > 0.0)) throw ConfigError("adam_eps", "adam_eps must be positive");
  if (stages.empty()) throw ConfigError("stage_frames", "at least one curriculum stage is required");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].max_frames < 1) throw ConfigError("stage_frames", "stage_frames must be >= 1");
    if (i && stages[i].max_frames <= stages[i - 1].max_frames) {
      throw ConfigError("stage_frames", "stage_frames must be strictly increasing");
    }
  }
  if (batch_size < 1) throw ConfigError("batch_size", "batch_size must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm", "clip_norm must be positive");
}

const std::set<std::string>& TrainConfig::keys() {
  static const std::set<std::string> k{"lambda",       "peak_lr",      "warmup_steps", "beta1",
                                       "beta2",        "adam_eps",     "stage_frames", "stage_epochs",
                                       "batch_size",   "seed",         "clip_norm",    "corrupt"};
  return k;
}

TrainConfig TrainConfig::from_kv(const KeyValueConfig& kv) {
  TrainConfig c;
  c.lambda = kv.get_double("lambda", c.lambda);
  c.peak_lr = kv.get_double("peak_lr", c.peak_lr);
  const auto warm = kv.get_int("warmup_steps", static_cast<long long>(c.warmup_steps));
  if (warm < 1) throw ConfigError("warmup_steps", "warmup_steps must be >= 1");
  c.warmup_steps = static_cast<std::size_t>(warm);
  c.adam.beta1 = kv.get_double("beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("adam_eps", c.adam.eps);
  std::vector<long long> frames, epochs;
  for (const auto& s : c.stages) {
    frames.push_back(static_cast<long long>(s.max_frames));
    epochs.push_back(static_cast<long long>(s.epochs));
  }
  frames = kv.get_ints("stage_frames", frames);
  epochs = kv.get_ints("stage_epochs", epochs);
  if (frames.size() != epochs.size()) {
    throw ConfigError("stage_epochs", "stage_epochs must have one entry per stage_frames entry");
  }
  c.stages.clear();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i] < 1) throw ConfigError("stage_frames", "stage_frames must be >= 1");
    if (epochs[i] < 0) throw ConfigError("stage_epochs", "stage_epochs must be >= 0");
    c.stages.push_back({static_cast<std::size_t>(frames[i]), static_cast<std::size_t>(epochs[i])});
  }
  const auto bs = kv.get_int("batch_size", static_cast<long long>(c.batch_size));
  if (bs < 1) throw ConfigError("batch_size", "batch_size must be >= 1");
  c.batch_size = static_cast<std::size_t>(bs);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.clip_norm = kv.get_double("clip_norm", c.clip_norm);
  c.corrupt = kv.get_bool("corrupt", c.corrupt);
  c.validate();
  return c;
}

KeyValueConfig TrainConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("lambda", format_double(lambda));
  kv.set("peak_lr", format_double(peak_lr));
  kv.set("warmup_steps", std::to_string(warmup_steps));
  kv.set("beta1", format_double(adam.beta1));
  kv.set("beta2", format_double(adam.beta2));
  kv.set("adam_eps", format_double(adam.eps));
  std::string f, e;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    f += (i ? "," : "") + std::to_string(stages[i].max_frames);
    e += (i ? "," : "") + std::to_string(stages[i].epochs);
  }
  kv.set("stage_frames", f);
  kv.set("stage_epochs", e);
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("seed", std::to_string(seed));
  kv.set("clip_norm", format_double(clip_norm));
  kv.set("corrupt", corrupt ? "true" : "false");
  return kv;
}

// ---------------------------------------------------------------------------
// Training loop

std::vector<std::int64_t> decoder_input(std::span<const std::int64_t> tokens) {
  std::vector<std::int64_t> y{kSos};
  y.insert(y.end(), tokens.begin(), tokens.end());
  return y;
}

std::vector<std::int64_t> decoder_target(std::span<const std::int64_t> tokens) {
  std::vector<std::int64_t> y(tokens.begin(), tokens.end());
  y.push_back(kEos);
  return y;
}

LossParts example_loss(AvRelModel& model, const VideoClip& video, const AudioClip& audio,
                       std::span<const std::int64_t> tokens, double lambda) {
  const auto y_in = decoder_input(tokens);
  const auto y_out = decoder_target(tokens);
  auto out = model.forward(video, audio, y_in);
  LossParts parts;
  parts.l_ctc = ctc_loss(out.ctc_logits, tokens);
  parts.l_att = attention_loss(out.att_logits, y_out);
  parts.l_joint = joint_loss(parts.l_att, parts.l_ctc, lambda);
  return parts;
}

std::vector<StepMetrics> train(AvRelModel& model, std::span<const Example> data,
                               const TrainConfig& cfg, const CorruptionResources* corruption,
                               const TrainHooks& hooks) {
  cfg.validate();
  model.set_training(true);
  auto params = model.params().parameters();
  model.params().zero_grad();
  Adam adam(params, cfg.adam);
  std::vector<StepMetrics> log;
  std::size_t step = 0, epoch_global = 0;

  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const auto& stage = cfg.stages[si];
    std::vector<std::size_t> subset;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].video.frames_count <= stage.max_frames) subset.push_back(i);
    }
    if (subset.empty()) {
      throw Error("data", "train: curriculum stage " + std::to_string(si) + " (max_frames " +
                              std::to_string(stage.max_frames) + ") has no examples");
    }
    for (std::size_t ep = 0; ep < stage.epochs; ++ep, ++epoch_global) {
      auto order = subset;
      Rng shuffle(derive_seed(cfg.seed, 0x5eed, si, ep));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
      }
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        const std::size_t e = std::min(order.size(), b + cfg.batch_size);
        const double inv = 1.0 / static_cast<double>(e - b);
        StepMetrics m;
        m.step = ++step;
        m.stage = si;
        m.lr = lr_schedule(step, cfg.peak_lr, cfg.warmup_steps);
        for (std::size_t j = b; j < e; ++j) {
          const Example& ex = data[order[j]];
          LossParts parts;
          if (cfg.corrupt && corruption) {
            const auto plan = plan_corruption(train_plan_seed(cfg.seed, epoch_global, ex.clip_id),
                                              ex.video.frames_count, ex.audio.samples.size(),
                                              corruption->config);
            auto [v, a] = corrupt_pair(ex.video, ex.audio, plan, corruption->patches,
                                       corruption->babble);
            parts = example_loss(model, v, a, ex.tokens, cfg.lambda);
          } else {
            parts = example_loss(model, ex.video, ex.audio, ex.tokens, cfg.lambda);
          }
          backward(ops::scale(parts.l_joint, inv));
          m.l_ctc += inv * parts.l_ctc.item();
          m.l_att += inv * parts.l_att.item();
          m.l_joint += inv * parts.l_joint.item();
        }
        clip_grad_norm(params, cfg.clip_norm);
        adam.step(m.lr);
        model.params().zero_grad();
        log.push_back(m);
        if (hooks.on_step) hooks.on_step(m);
      }
    }
    if (hooks.on_stage_end) hooks.on_stage_end(si);
  }
  return log;
}

std::size_t transfer_parameters(AvRelModel& dst, const AvRelModel& src,
                                const std::string& src_prefix, const std::string& dst_prefix) {
  std::map<std::string, Tensor> targets;
  for (const auto& nt : dst.params().named_tensors()) targets.emplace(nt.name, nt.tensor);
  std::size_t copied = 0;
  for (const auto& nt : src.params().named_tensors()) {
    if (nt.name.rfind(src_prefix, 0) != 0) continue;
    const std::string name = dst_prefix + nt.name.substr(src_prefix.size());
    auto it = targets.find(name);
    if (it == targets.end()) throw Error("checkpoint", "transfer: target model has no tensor " + name);
    if (it->second.shape() != nt.tensor.shape()) {
      throw ShapeError("transfer: " + name + " is " + shape_str(it->second.shape()) + " in the target, " +
                       shape_str(nt.tensor.shape()) + " in the source");
    }
    std::copy(nt.tensor.values().begin(), nt.tensor.values().end(), it->second.mutable_values().begin());
    ++copied;
  }
  if (copied == 0) throw Error("checkpoint", "transfer: source has no tensors under '" + src_prefix + "'");
  return copied;
}

std::string metrics_csv_header() { return "step,stage,lr,l_ctc,l_att,l_joint"; }

std::string metrics_csv_row(const StepMetrics& m) {
  return std::to_string(m.step) + "," + std::to_string(m.stage) + "," + format_double(m.lr) +
         "," + format_double(m.l_ctc) + "," + format_double(m.l_att) + "," +
         format_double(m.l_joint);
}

}  // namespace avrel
