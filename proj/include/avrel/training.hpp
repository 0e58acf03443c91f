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

#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "avrel/corruption.hpp"
#include "avrel/kvconfig.hpp"
#include "avrel/model.hpp"
#include "avrel/tensor.hpp"

namespace avrel {

// Negative log of the total probability of all blank-augmented alignments
// of `labels` under softmax(logits). Gradient via forward-backward.
Tensor ctc_loss(const Tensor& logits, std::span<const std::int64_t> labels,
                std::int64_t blank = kBlank);

// Plain-double version of the forward recursion; used by the decoder tests
// and for reporting.
double ctc_neg_log_likelihood(std::span<const double> log_probs, std::size_t T, std::size_t V,
                              std::span<const std::int64_t> labels, std::int64_t blank = kBlank);

// Mean per-token cross-entropy; `targets` has one entry per logit row.
Tensor attention_loss(const Tensor& logits, std::span<const std::int64_t> targets);

// lambda * l_att + (1 - lambda) * l_ctc.
Tensor joint_loss(const Tensor& l_att, const Tensor& l_ctc, double lambda);
double joint_loss(double l_att, double l_ctc, double lambda);

// Linear warmup to `peak`, then peak * sqrt(warmup / step).
double lr_schedule(std::size_t step, double peak, std::size_t warmup);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

class Adam {
 public:
  Adam(std::span<Parameter> params, AdamConfig cfg = {});
  // One bias-corrected update with the gradients currently stored on the
  // parameters. Throws NumericError naming the first non-finite gradient.
  void step(double lr);
  std::size_t steps() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::span<Parameter> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t step_ = 0;
};

// Scales gradients so their global L2 norm is at most `max_norm`; returns
// the norm before clipping.
double clip_grad_norm(std::span<Parameter> params, double max_norm);

struct CurriculumStage {
  std::size_t max_frames = 0;
  std::size_t epochs = 0;
};

struct TrainConfig {
  double lambda = 0.9;
  double peak_lr = 4e-4;
  std::size_t warmup_steps = 500;
  AdamConfig adam;
  std::vector<CurriculumStage> stages{{10, 5}, {20, 5}, {40, 5}};
  std::size_t batch_size = 1;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  bool corrupt = true;

  void validate() const;
  static TrainConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  static const std::set<std::string>& keys();
};

// One training/evaluation utterance. `tokens` holds symbol ids only (no
// sos/eos).
struct Example {
  std::string clip_id;
  VideoClip video;
  AudioClip audio;
  std::vector<std::int64_t> tokens;
};

struct StepMetrics {
  std::size_t step = 0;
  std::size_t stage = 0;
  double lr = 0.0;
  double l_ctc = 0.0;
  double l_att = 0.0;
  double l_joint = 0.0;
};

// Noise sources used for on-the-fly corruption.
struct CorruptionResources {
  CorruptionConfig config;
  std::vector<OcclusionPatch> patches;
  std::vector<std::vector<double>> babble;
};

// Seeds with the top bit clear are reserved for training-time corruption,
// seeds with it set for evaluation, so the two sets never meet.
inline constexpr std::uint64_t kEvalSeedBit = 1ULL << 63;
inline std::uint64_t train_plan_seed(std::uint64_t base, std::size_t epoch,
                                     const std::string& clip_id) {
  return derive_seed(base, epoch, fnv1a64(clip_id)) & ~kEvalSeedBit;
}
inline std::uint64_t eval_plan_seed(std::uint64_t base, const std::string& condition,
                                    const std::string& clip_id) {
  return derive_seed(base, fnv1a64(condition), fnv1a64(clip_id)) | kEvalSeedBit;
}

// Teacher-forced decoder input [sos, y...] and targets [y..., eos].
std::vector<std::int64_t> decoder_input(std::span<const std::int64_t> tokens);
std::vector<std::int64_t> decoder_target(std::span<const std::int64_t> tokens);

struct LossParts {
  Tensor l_ctc, l_att, l_joint;
};

// Forward pass plus the three losses for one (possibly corrupted) example.
LossParts example_loss(AvRelModel& model, const VideoClip& video, const AudioClip& audio,
                       std::span<const std::int64_t> tokens, double lambda);

struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  // Called after each curriculum stage with its index.
  std::function<void(std::size_t)> on_stage_end;
};

// Curriculum training. Stage i keeps the examples with at most
// stages[i].max_frames frames; every example gets a fresh corruption plan
// per epoch. Deterministic for a fixed config.
std::vector<StepMetrics> train(AvRelModel& model, std::span<const Example> data,
                               const TrainConfig& cfg, const CorruptionResources* corruption,
                               const TrainHooks& hooks = {});

// Copies every parameter and buffer of `src` named `src_prefix`... into the
// `dst` tensor with the prefix swapped for `dst_prefix`. Used to start fused
// models from unimodal front-ends. Returns the number of tensors copied;
// no match, a missing target or a shape mismatch is an error.
std::size_t transfer_parameters(AvRelModel& dst, const AvRelModel& src,
                                const std::string& src_prefix, const std::string& dst_prefix);

std::string metrics_csv_header();
std::string metrics_csv_row(const StepMetrics& m);

}  // namespace avrel
