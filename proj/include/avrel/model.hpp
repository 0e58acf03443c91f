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
#include <set>
#include <span>
#include <string>
#include <vector>

#include "avrel/corruption.hpp"
#include "avrel/kvconfig.hpp"
#include "avrel/tensor.hpp"

namespace avrel {

// Reserved token ids; transcript symbols start at kFirstSymbol.
inline constexpr std::int64_t kBlank = 0;
inline constexpr std::int64_t kSos = 1;
inline constexpr std::int64_t kEos = 2;
inline constexpr std::int64_t kFirstSymbol = 3;

enum class ModelVariant {
  kRelScore,    // scoring + emphasis + time-concat Conformer fusion
  kConcat,      // time-concat fusion without scoring
  kLinear,      // per-stream encoders, feature concat + linear fusion, no scoring
  kAudioOnly,
  kVisualOnly,
};

std::string variant_name(ModelVariant v);
ModelVariant parse_variant(const std::string& name);

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t ff_dim = 128;
  std::size_t enc_layers = 3;
  std::size_t dec_layers = 2;
  std::size_t heads = 4;
  std::size_t conv_kernel = 7;
  std::size_t score_kernel = 3;
  std::size_t vocab_size = 11;  // blank, sos, eos + symbols
  std::size_t image_h = 24, image_w = 24;
  std::vector<std::size_t> visual_channels{8, 16, 16};
  std::vector<std::size_t> visual_strides{2, 2, 1};
  std::vector<std::size_t> audio_channels{16, 32, 32};
  std::vector<std::size_t> audio_strides{4, 4, 10};
  ModelVariant variant = ModelVariant::kRelScore;
  // Test hook: the self-attention sublayer passes its input through.
  bool attention_bypass = false;

  std::size_t samples_per_frame() const;
  bool uses_audio() const { return variant != ModelVariant::kVisualOnly; }
  bool uses_video() const { return variant != ModelVariant::kAudioOnly; }
  bool has_scoring() const { return variant == ModelVariant::kRelScore; }

  void validate() const;
  static ModelConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  static const std::set<std::string>& keys();
};

enum class Modality { kAudio, kVisual };

struct ReliabilityTrace {
  Tensor s_a, s_v;  // [T x D]; undefined for variants without scoring
  std::vector<double> s_a_mean, s_v_mean;
  bool empty() const { return s_a_mean.empty(); }
};

struct ModelOutput {
  Tensor ctc_logits;  // [T x V]
  Tensor att_logits;  // [J x V], undefined if no decoder input was given
  ReliabilityTrace trace;
};

// h(f, s) = f + f * s elementwise.
Tensor emphasize(const Tensor& f, const Tensor& s);

class AvRelModel {
 public:
  AvRelModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Batch-norm layers use batch statistics and update their running buffers
  // in training mode; eval mode normalizes with the running buffers.
  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  Tensor visual_frontend(const VideoClip& video);
  Tensor audio_frontend(const AudioClip& audio, std::size_t target_frames);
  Tensor reliability_score(const Tensor& f, Modality m);
  // Audio-first time concatenation, Conformer encoding, first T rows. When
  // `full` is given it receives the whole [2T x D] encoding.
  Tensor fuse_encode(const Tensor& fa, const Tensor& fv, Tensor* full = nullptr);
  // Variant-dependent encoder producing the [T x D] memory.
  Tensor encode(const VideoClip& video, const AudioClip& audio, ReliabilityTrace* trace);
  Tensor ctc_head(const Tensor& memory);
  Tensor decode_forward(const Tensor& memory, std::span<const std::int64_t> y_in);

  ModelOutput forward(const VideoClip& video, const AudioClip& audio,
                      std::span<const std::int64_t> y_in);

 private:
  struct Linear {
    Tensor w, b;
  };
  struct BatchNorm {
    Tensor gamma, beta, mean, var;
  };
  struct FeedForward {
    Tensor ln_g, ln_b;
    Linear l1, l2;
  };
  struct ConformerBlock {
    FeedForward ff1, ff2;
    Tensor att_ln_g, att_ln_b;
    Linear q, k, v, o;
    Tensor pos_w, pos_u, pos_v;
    Tensor conv_ln_g, conv_ln_b;
    Linear pw1, pw2;
    Tensor dw_w, dw_b;
    BatchNorm conv_bn;
    Tensor out_ln_g, out_ln_b;
  };
  struct DecoderLayer {
    Tensor sa_ln_g, sa_ln_b;
    Linear sa_q, sa_k, sa_v, sa_o;
    Tensor ca_ln_g, ca_ln_b;
    Linear ca_q, ca_k, ca_v, ca_o;
    Tensor ff_ln_g, ff_ln_b;
    Linear ff1, ff2;
  };
  struct ConvLayer {
    Tensor w, b;
    std::size_t stride = 1, padding = 0;
  };
  struct Scorer {
    std::vector<ConvLayer> conv;
    std::vector<BatchNorm> bn;
  };

  Linear make_linear(const std::string& name, std::size_t in, std::size_t out);
  BatchNorm make_bn(const std::string& name, std::size_t channels);
  FeedForward make_ff(const std::string& name);
  ConformerBlock make_conformer(const std::string& name);
  Scorer make_scorer(const std::string& name);

  Tensor linear(const Linear& l, const Tensor& x) const;
  Tensor bn(BatchNorm& b, const Tensor& x);
  Tensor feed_forward(const FeedForward& f, const Tensor& x) const;
  // period: rows share relative positions modulo this length (0 = none).
  Tensor conformer(ConformerBlock& blk, const Tensor& x, std::size_t period);
  Tensor encoder_stack(std::vector<ConformerBlock>& stack, const Tensor& x, std::size_t period = 0);

  ModelConfig cfg_;
  Rng rng_;
  ParameterSet params_;
  bool training_ = true;

  std::vector<ConvLayer> vis_conv_;
  Linear vis_proj_;
  std::vector<ConvLayer> aud_conv_;
  Linear aud_proj_;
  Scorer score_a_, score_v_;
  std::vector<ConformerBlock> enc_, enc_v_;  // enc_v_ only for the linear variant
  Linear fuse_;                              // linear variant only
  Linear ctc_;
  Tensor embed_;
  std::vector<DecoderLayer> dec_;
  Tensor dec_ln_g_, dec_ln_b_;
  Linear out_;
};

// Row means of a [T x D] score tensor.
std::vector<double> frame_means(const Tensor& scores);

}  // namespace avrel
