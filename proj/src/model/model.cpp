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

#include "avrel/model.hpp"

#include <cmath>
#include <numeric>

#include "avrel/ops.hpp"

namespace avrel {

namespace {

std::vector<std::size_t> to_sizes(const std::vector<long long>& v, const char* key) {
  std::vector<std::size_t> out;
  for (long long x : v) {
    if (x < 1) throw ConfigError(key, std::string(key) + ": entries must be >= 1");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

std::vector<long long> to_ll(const std::vector<std::size_t>& v) {
  return {v.begin(), v.end()};
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kRelScore: return "relscore";
    case ModelVariant::kConcat: return "concat";
    case ModelVariant::kLinear: return "linear";
    case ModelVariant::kAudioOnly: return "audio_only";
    case ModelVariant::kVisualOnly: return "visual_only";
  }
  return "?";
}

ModelVariant parse_variant(const std::string& name) {
  for (auto v : {ModelVariant::kRelScore, ModelVariant::kConcat, ModelVariant::kLinear,
                 ModelVariant::kAudioOnly, ModelVariant::kVisualOnly}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("variant", "unknown model variant '" + name + "'");
}

// ---------------------------------------------------------------------------
// Config

std::size_t ModelConfig::samples_per_frame() const {
  return std::accumulate(audio_strides.begin(), audio_strides.end(), std::size_t{1},
                         std::multiplies<>());
}

void ModelConfig::validate() const {
  auto positive = [](const char* key, std::size_t v) {
    if (v < 1) throw ConfigError(key, std::string(key) + " must be >= 1");
  };
  positive("d_model", d_model);
  positive("ff_dim", ff_dim);
  positive("enc_layers", enc_layers);
  positive("dec_layers", dec_layers);
  positive("heads", heads);
  if (d_model % heads) throw ConfigError("heads", "d_model must be divisible by heads");
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel", "conv_kernel must be odd");
  if (score_kernel % 2 == 0) throw ConfigError("score_kernel", "score_kernel must be odd");
  if (vocab_size <= static_cast<std::size_t>(kFirstSymbol)) {
    throw ConfigError("vocab_size", "vocab_size must leave room for blank, sos, eos and symbols");
  }
  if (visual_channels.empty() || visual_channels.size() != visual_strides.size()) {
    throw ConfigError("visual_channels", "visual_channels and visual_strides must pair up");
  }
  if (audio_channels.empty() || audio_channels.size() != audio_strides.size()) {
    throw ConfigError("audio_channels", "audio_channels and audio_strides must pair up");
  }
  std::size_t h = image_h, w = image_w;
  for (auto s : visual_strides) {
    h = (h + 2 - 3) / s + 1;
    w = (w + 2 - 3) / s + 1;
  }
  if (image_h < 3 || image_w < 3 || h < 1 || w < 1) {
    throw ConfigError("image_h", "image too small for the visual front-end");
  }
}

const std::set<std::string>& ModelConfig::keys() {
  static const std::set<std::string> k{
      "d_model",       "ff_dim",         "enc_layers",      "dec_layers",
      "heads",         "conv_kernel",    "score_kernel",    "vocab_size",
      "image_h",       "image_w",        "visual_channels", "visual_strides",
      "audio_channels", "audio_strides", "variant"};
  return k;
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv) {
  ModelConfig c;
  auto sz = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(key, std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  c.d_model = sz("d_model", c.d_model);
  c.ff_dim = sz("ff_dim", c.ff_dim);
  c.enc_layers = sz("enc_layers", c.enc_layers);
  c.dec_layers = sz("dec_layers", c.dec_layers);
  c.heads = sz("heads", c.heads);
  c.conv_kernel = sz("conv_kernel", c.conv_kernel);
  c.score_kernel = sz("score_kernel", c.score_kernel);
  c.vocab_size = sz("vocab_size", c.vocab_size);
  c.image_h = sz("image_h", c.image_h);
  c.image_w = sz("image_w", c.image_w);
  c.visual_channels = to_sizes(kv.get_ints("visual_channels", to_ll(c.visual_channels)), "visual_channels");
  c.visual_strides = to_sizes(kv.get_ints("visual_strides", to_ll(c.visual_strides)), "visual_strides");
  c.audio_channels = to_sizes(kv.get_ints("audio_channels", to_ll(c.audio_channels)), "audio_channels");
  c.audio_strides = to_sizes(kv.get_ints("audio_strides", to_ll(c.audio_strides)), "audio_strides");
  c.variant = parse_variant(kv.get_string("variant", variant_name(c.variant)));
  c.validate();
  return c;
}

KeyValueConfig ModelConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("d_model", std::to_string(d_model));
  kv.set("ff_dim", std::to_string(ff_dim));
  kv.set("enc_layers", std::to_string(enc_layers));
  kv.set("dec_layers", std::to_string(dec_layers));
  kv.set("heads", std::to_string(heads));
  kv.set("conv_kernel", std::to_string(conv_kernel));
  kv.set("score_kernel", std::to_string(score_kernel));
  kv.set("vocab_size", std::to_string(vocab_size));
  kv.set("image_h", std::to_string(image_h));
  kv.set("image_w", std::to_string(image_w));
  kv.set("visual_channels", join_sizes(visual_channels));
  kv.set("visual_strides", join_sizes(visual_strides));
  kv.set("audio_channels", join_sizes(audio_channels));
  kv.set("audio_strides", join_sizes(audio_strides));
  kv.set("variant", variant_name(variant));
  return kv;
}

// ---------------------------------------------------------------------------
// Construction

Tensor emphasize(const Tensor& f, const Tensor& s) {
  if (f.shape() != s.shape()) {
    throw ShapeError("emphasize: features " + shape_str(f.shape()) + " vs scores " +
                     shape_str(s.shape()));
  }
  return ops::add(f, ops::hadamard(f, s));
}

std::vector<double> frame_means(const Tensor& scores) {
  const std::size_t T = scores.dim(0), D = scores.dim(1);
  std::vector<double> out(T, 0.0);
  auto v = scores.values();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) out[t] += v[t * D + d];
    out[t] /= static_cast<double>(D);
  }
  return out;
}

AvRelModel::Linear AvRelModel::make_linear(const std::string& name, std::size_t in,
                                           std::size_t out) {
  Linear l;
  l.w = params_.add(name + ".w", {in, out}, "uniform_fan_in", in, rng_);
  l.b = params_.add(name + ".b", {out}, "zeros", 0, rng_);
  return l;
}

AvRelModel::BatchNorm AvRelModel::make_bn(const std::string& name, std::size_t c) {
  BatchNorm b;
  b.gamma = params_.add(name + ".gamma", {c}, "ones", 0, rng_);
  b.beta = params_.add(name + ".beta", {c}, "zeros", 0, rng_);
  b.mean = params_.add_buffer(name + ".running_mean", {c}, 0.0);
  b.var = params_.add_buffer(name + ".running_var", {c}, 1.0);
  return b;
}

AvRelModel::FeedForward AvRelModel::make_ff(const std::string& name) {
  FeedForward f;
  f.ln_g = params_.add(name + ".ln.gamma", {cfg_.d_model}, "ones", 0, rng_);
  f.ln_b = params_.add(name + ".ln.beta", {cfg_.d_model}, "zeros", 0, rng_);
  f.l1 = make_linear(name + ".l1", cfg_.d_model, cfg_.ff_dim);
  f.l2 = make_linear(name + ".l2", cfg_.ff_dim, cfg_.d_model);
  return f;
}

AvRelModel::ConformerBlock AvRelModel::make_conformer(const std::string& name) {
  const std::size_t D = cfg_.d_model;
  ConformerBlock b;
  b.ff1 = make_ff(name + ".ff1");
  b.att_ln_g = params_.add(name + ".att.ln.gamma", {D}, "ones", 0, rng_);
  b.att_ln_b = params_.add(name + ".att.ln.beta", {D}, "zeros", 0, rng_);
  b.q = make_linear(name + ".att.q", D, D);
  b.k = make_linear(name + ".att.k", D, D);
  b.v = make_linear(name + ".att.v", D, D);
  b.o = make_linear(name + ".att.o", D, D);
  b.pos_w = params_.add(name + ".att.pos.w", {D, D}, "uniform_fan_in", D, rng_);
  b.pos_u = params_.add(name + ".att.pos_u", {D}, "zeros", 0, rng_);
  b.pos_v = params_.add(name + ".att.pos_v", {D}, "zeros", 0, rng_);
  b.conv_ln_g = params_.add(name + ".conv.ln.gamma", {D}, "ones", 0, rng_);
  b.conv_ln_b = params_.add(name + ".conv.ln.beta", {D}, "zeros", 0, rng_);
  b.pw1 = make_linear(name + ".conv.pw1", D, 2 * D);
  b.dw_w = params_.add(name + ".conv.dw.w", {D, 1, cfg_.conv_kernel}, "uniform_fan_in",
                       cfg_.conv_kernel, rng_);
  b.dw_b = params_.add(name + ".conv.dw.b", {D}, "zeros", 0, rng_);
  b.conv_bn = make_bn(name + ".conv.bn", D);
  b.pw2 = make_linear(name + ".conv.pw2", D, D);
  b.ff2 = make_ff(name + ".ff2");
  b.out_ln_g = params_.add(name + ".ln.gamma", {D}, "ones", 0, rng_);
  b.out_ln_b = params_.add(name + ".ln.beta", {D}, "zeros", 0, rng_);
  return b;
}

AvRelModel::Scorer AvRelModel::make_scorer(const std::string& name) {
  const std::size_t D = cfg_.d_model, K = cfg_.score_kernel;
  Scorer s;
  for (int i = 0; i < 3; ++i) {
    const std::string n = name + ".conv" + std::to_string(i);
    ConvLayer c;
    c.w = params_.add(n + ".w", {D, D, K}, "uniform_fan_in", D * K, rng_);
    c.b = params_.add(n + ".b", {D}, "zeros", 0, rng_);
    c.stride = 1;
    c.padding = K / 2;
    s.conv.push_back(c);
    s.bn.push_back(make_bn(name + ".bn" + std::to_string(i), D));
  }
  return s;
}

AvRelModel::AvRelModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
  cfg_.validate();
  const std::size_t D = cfg_.d_model, V = cfg_.vocab_size;
  if (cfg_.uses_video()) {
    std::size_t cin = 1;
    for (std::size_t i = 0; i < cfg_.visual_channels.size(); ++i) {
      const std::string n = "frontend.v.conv" + std::to_string(i);
      ConvLayer c;
      const std::size_t cout = cfg_.visual_channels[i];
      c.w = params_.add(n + ".w", {cout, cin, 3, 3}, "uniform_fan_in", cin * 9, rng_);
      c.b = params_.add(n + ".b", {cout}, "zeros", 0, rng_);
      c.stride = cfg_.visual_strides[i];
      c.padding = 1;
      vis_conv_.push_back(c);
      cin = cout;
    }
    vis_proj_ = make_linear("frontend.v.proj", cin, D);
  }
  if (cfg_.uses_audio()) {
    std::size_t cin = 1;
    for (std::size_t i = 0; i < cfg_.audio_channels.size(); ++i) {
      const std::string n = "frontend.a.conv" + std::to_string(i);
      ConvLayer c;
      const std::size_t cout = cfg_.audio_channels[i], s = cfg_.audio_strides[i];
      // kernel s + 2*floor(s/2) with padding floor(s/2) gives L_out = L / s.
      const std::size_t k = s + 2 * (s / 2);
      c.w = params_.add(n + ".w", {cout, cin, k}, "uniform_fan_in", cin * k, rng_);
      c.b = params_.add(n + ".b", {cout}, "zeros", 0, rng_);
      c.stride = s;
      c.padding = s / 2;
      aud_conv_.push_back(c);
      cin = cout;
    }
    aud_proj_ = make_linear("frontend.a.proj", cin, D);
  }
  if (cfg_.has_scoring()) {
    score_a_ = make_scorer("score.a");
    score_v_ = make_scorer("score.v");
  }
  const std::string enc_name = cfg_.variant == ModelVariant::kLinear ? "encoder.a" : "encoder";
  for (std::size_t i = 0; i < cfg_.enc_layers; ++i) {
    enc_.push_back(make_conformer(enc_name + ".block" + std::to_string(i)));
  }
  if (cfg_.variant == ModelVariant::kLinear) {
    for (std::size_t i = 0; i < cfg_.enc_layers; ++i) {
      enc_v_.push_back(make_conformer("encoder.v.block" + std::to_string(i)));
    }
    fuse_ = make_linear("fusion", 2 * D, D);
  }
  ctc_ = make_linear("ctc", D, V);
  embed_ = params_.add("decoder.embed", {V, D}, "uniform_fan_in", 1, rng_);
  for (std::size_t i = 0; i < cfg_.dec_layers; ++i) {
    const std::string n = "decoder.layer" + std::to_string(i);
    DecoderLayer l;
    l.sa_ln_g = params_.add(n + ".sa.ln.gamma", {D}, "ones", 0, rng_);
    l.sa_ln_b = params_.add(n + ".sa.ln.beta", {D}, "zeros", 0, rng_);
    l.sa_q = make_linear(n + ".sa.q", D, D);
    l.sa_k = make_linear(n + ".sa.k", D, D);
    l.sa_v = make_linear(n + ".sa.v", D, D);
    l.sa_o = make_linear(n + ".sa.o", D, D);
    l.ca_ln_g = params_.add(n + ".ca.ln.gamma", {D}, "ones", 0, rng_);
    l.ca_ln_b = params_.add(n + ".ca.ln.beta", {D}, "zeros", 0, rng_);
    l.ca_q = make_linear(n + ".ca.q", D, D);
    l.ca_k = make_linear(n + ".ca.k", D, D);
    l.ca_v = make_linear(n + ".ca.v", D, D);
    l.ca_o = make_linear(n + ".ca.o", D, D);
    l.ff_ln_g = params_.add(n + ".ff.ln.gamma", {D}, "ones", 0, rng_);
    l.ff_ln_b = params_.add(n + ".ff.ln.beta", {D}, "zeros", 0, rng_);
    l.ff1 = make_linear(n + ".ff.l1", D, cfg_.ff_dim);
    l.ff2 = make_linear(n + ".ff.l2", cfg_.ff_dim, D);
    dec_.push_back(l);
  }
  dec_ln_g_ = params_.add("decoder.ln.gamma", {D}, "ones", 0, rng_);
  dec_ln_b_ = params_.add("decoder.ln.beta", {D}, "zeros", 0, rng_);
  out_ = make_linear("decoder.out", D, V);
}

// ---------------------------------------------------------------------------
// Building blocks

Tensor AvRelModel::linear(const Linear& l, const Tensor& x) const {
  return ops::add(ops::matmul(x, l.w), l.b);
}

Tensor AvRelModel::bn(BatchNorm& b, const Tensor& x) {
  return ops::batch_norm(x, b.gamma, b.beta, b.mean, b.var, training_);
}

Tensor AvRelModel::feed_forward(const FeedForward& f, const Tensor& x) const {
  auto h = ops::layer_norm(x, f.ln_g, f.ln_b);
  return linear(f.l2, ops::swish(linear(f.l1, h)));
}

Tensor AvRelModel::conformer(ConformerBlock& blk, const Tensor& x, std::size_t period) {
  const std::size_t L = x.dim(0), D = cfg_.d_model;
  const std::size_t P = period == 0 ? L : period;
  auto h = ops::add(x, ops::scale(feed_forward(blk.ff1, x), 0.5));

  // Relative-position self-attention; pos_u / pos_v are the content and
  // position biases added to the queries.
  auto a = ops::layer_norm(h, blk.att_ln_g, blk.att_ln_b);
  if (cfg_.attention_bypass) {
    h = ops::add(h, a);
  } else {
    auto q = linear(blk.q, a);
    auto k = linear(blk.k, a);
    auto v = linear(blk.v, a);
    auto p = ops::matmul(ops::relative_positional_encoding(P, D), blk.pos_w);
    auto pos = ops::relative_position_scores(ops::add(q, blk.pos_v), p, cfg_.heads, P);
    auto att = ops::scaled_dot_product_attention(ops::add(q, blk.pos_u), k, v, cfg_.heads,
                                                 false, pos);
    h = ops::add(h, linear(blk.o, att));
  }

  // Convolution module: pointwise, GLU, depthwise, BN, swish, pointwise.
  auto c = ops::layer_norm(h, blk.conv_ln_g, blk.conv_ln_b);
  c = linear(blk.pw1, c);
  c = ops::hadamard(ops::slice(c, 1, 0, D), ops::sigmoid(ops::slice(c, 1, D, D)));
  c = ops::conv1d(c, blk.dw_w, blk.dw_b, 1, cfg_.conv_kernel / 2, D);
  c = ops::swish(bn(blk.conv_bn, c));
  h = ops::add(h, linear(blk.pw2, c));

  h = ops::add(h, ops::scale(feed_forward(blk.ff2, h), 0.5));
  return ops::layer_norm(h, blk.out_ln_g, blk.out_ln_b);
}

Tensor AvRelModel::encoder_stack(std::vector<ConformerBlock>& stack, const Tensor& x,
                                 std::size_t period) {
  Tensor h = x;
  for (auto& blk : stack) h = conformer(blk, h, period);
  return h;
}

// ---------------------------------------------------------------------------
// Public stages

Tensor AvRelModel::visual_frontend(const VideoClip& video) {
  if (!cfg_.uses_video()) throw Error("model", "visual_frontend: variant has no visual stream");
  if (video.height != cfg_.image_h || video.width != cfg_.image_w || video.channels != 1) {
    throw ShapeError("visual_frontend: expected grayscale " + std::to_string(cfg_.image_h) + "x" +
                     std::to_string(cfg_.image_w) + " frames, got " +
                     std::to_string(video.height) + "x" + std::to_string(video.width) + "x" +
                     std::to_string(video.channels));
  }
  const std::size_t T = video.frames_count;
  if (T < 1 || video.frames.size() != T * video.frame_size()) {
    throw ShapeError("visual_frontend: pixel buffer does not match frame count");
  }
  Tensor x({T, 1, video.height, video.width}, video.frames);
  for (const auto& c : vis_conv_) x = ops::relu(ops::conv2d(x, c.w, c.b, c.stride, c.padding));
  const std::size_t C = x.dim(1), hw = x.dim(2) * x.dim(3);
  x = ops::mean(ops::reshape(x, {T, C, hw}), 2);
  return linear(vis_proj_, x);
}

Tensor AvRelModel::audio_frontend(const AudioClip& audio, std::size_t target_frames) {
  if (!cfg_.uses_audio()) throw Error("model", "audio_frontend: variant has no audio stream");
  const std::size_t spf = cfg_.samples_per_frame(), S = audio.samples.size();
  if (target_frames < 1 || S != target_frames * spf) {
    throw SizingError("audio_frontend: " + std::to_string(S) + " samples cannot map to " +
                      std::to_string(target_frames) + " frames at " + std::to_string(spf) +
                      " samples per frame; pad or trim the waveform to a multiple of " +
                      std::to_string(spf));
  }
  Tensor x({S, 1}, audio.samples);
  for (const auto& c : aud_conv_) x = ops::relu(ops::conv1d(x, c.w, c.b, c.stride, c.padding));
  return linear(aud_proj_, x);
}

Tensor AvRelModel::reliability_score(const Tensor& f, Modality m) {
  if (!cfg_.has_scoring()) throw Error("model", "reliability_score: variant has no scorer");
  Scorer& s = m == Modality::kAudio ? score_a_ : score_v_;
  Tensor h = f;
  for (std::size_t i = 0; i < s.conv.size(); ++i) {
    h = ops::conv1d(h, s.conv[i].w, s.conv[i].b, 1, s.conv[i].padding);
    h = bn(s.bn[i], h);
    // The last layer feeds the sigmoid directly so scores span (0, 1).
    if (i + 1 < s.conv.size()) h = ops::relu(h);
  }
  return ops::sigmoid(h);
}

Tensor AvRelModel::fuse_encode(const Tensor& fa, const Tensor& fv, Tensor* full) {
  if (fa.shape() != fv.shape()) {
    throw ShapeError("fuse_encode: audio " + shape_str(fa.shape()) + " vs visual " +
                     shape_str(fv.shape()));
  }
  const std::size_t T = fa.dim(0);
  std::vector<Tensor> parts{fa, fv};
  // Relative distances run over frame time, so audio t and visual t sit at
  // distance 0 instead of a clip-dependent T rows apart.
  auto enc = encoder_stack(enc_, ops::concat(parts, 0), T);
  if (full) *full = enc;
  return ops::slice(enc, 0, 0, T);
}

Tensor AvRelModel::encode(const VideoClip& video, const AudioClip& audio, ReliabilityTrace* trace) {
  switch (cfg_.variant) {
    case ModelVariant::kAudioOnly:
      return encoder_stack(enc_, audio_frontend(audio, audio.samples.size() / cfg_.samples_per_frame()));
    case ModelVariant::kVisualOnly:
      return encoder_stack(enc_, visual_frontend(video));
    default:
      break;
  }
  const std::size_t T = video.frames_count;
  auto fv = visual_frontend(video);
  auto fa = audio_frontend(audio, T);
  if (cfg_.variant == ModelVariant::kLinear) {
    std::vector<Tensor> parts{encoder_stack(enc_, fa), encoder_stack(enc_v_, fv)};
    return linear(fuse_, ops::concat(parts, 1));
  }
  if (cfg_.variant == ModelVariant::kRelScore) {
    auto sa = reliability_score(fa, Modality::kAudio);
    auto sv = reliability_score(fv, Modality::kVisual);
    if (trace) {
      trace->s_a = sa;
      trace->s_v = sv;
      trace->s_a_mean = frame_means(sa);
      trace->s_v_mean = frame_means(sv);
    }
    fa = emphasize(fa, sa);
    fv = emphasize(fv, sv);
  }
  return fuse_encode(fa, fv);
}

Tensor AvRelModel::ctc_head(const Tensor& memory) { return linear(ctc_, memory); }

Tensor AvRelModel::decode_forward(const Tensor& memory, std::span<const std::int64_t> y_in) {
  if (y_in.empty() || y_in[0] != kSos) throw Error("vocab", "decode_forward: input must start with sos");
  const std::size_t J = y_in.size(), D = cfg_.d_model;
  auto x = ops::add(ops::embedding_lookup(embed_, y_in), ops::positional_encoding(J, D));
  for (auto& l : dec_) {
    auto a = ops::layer_norm(x, l.sa_ln_g, l.sa_ln_b);
    x = ops::add(x, linear(l.sa_o, ops::scaled_dot_product_attention(
                                       linear(l.sa_q, a), linear(l.sa_k, a), linear(l.sa_v, a),
                                       cfg_.heads, true)));
    auto c = ops::layer_norm(x, l.ca_ln_g, l.ca_ln_b);
    x = ops::add(x, linear(l.ca_o, ops::scaled_dot_product_attention(
                                       linear(l.ca_q, c), linear(l.ca_k, memory),
                                       linear(l.ca_v, memory), cfg_.heads, false)));
    auto f = ops::layer_norm(x, l.ff_ln_g, l.ff_ln_b);
    x = ops::add(x, linear(l.ff2, ops::relu(linear(l.ff1, f))));
  }
  return linear(out_, ops::layer_norm(x, dec_ln_g_, dec_ln_b_));
}

ModelOutput AvRelModel::forward(const VideoClip& video, const AudioClip& audio,
                                std::span<const std::int64_t> y_in) {
  if (cfg_.uses_audio() && cfg_.uses_video() &&
      audio.samples.size() != video.frames_count * cfg_.samples_per_frame()) {
    throw SizingError("forward: audio/video lengths are not paired (" +
                      std::to_string(audio.samples.size()) + " samples for " +
                      std::to_string(video.frames_count) + " frames)");
  }
  ModelOutput out;
  auto memory = encode(video, audio, &out.trace);
  out.ctc_logits = ctc_head(memory);
  if (!y_in.empty()) out.att_logits = decode_forward(memory, y_in);
  return out;
}

}  // namespace avrel
