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

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "avrel/data.hpp"
#include "avrel/parallel.hpp"

namespace avrel {

namespace {

constexpr std::size_t kGlyphRows = 4, kGlyphCols = 4;

// Glyph bitmaps for the whole vocabulary; depend on the dataset seed only,
// so every clip of a dataset draws a symbol the same way. Any two glyphs
// differ in at least kMinGlyphDistance cells.
constexpr std::size_t kMinGlyphDistance = 5;

std::vector<std::vector<bool>> glyph_bank(const SyntheticSpec& spec) {
  Rng r(derive_seed(spec.seed, 0x61f0));
  std::vector<std::vector<bool>> bank;
  for (std::size_t tries = 0; bank.size() < spec.vocab_size; ++tries) {
    if (tries > 200000) throw ConfigError("vocab_size", "cannot draw that many distinct glyphs");
    std::vector<bool> m(kGlyphRows * kGlyphCols);
    std::size_t on = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      m[i] = r.bernoulli(0.5);
      on += m[i];
    }
    if (on < 5 || on > 11) continue;
    bool far = true;
    for (const auto& g : bank) {
      std::size_t d = 0;
      for (std::size_t i = 0; i < m.size(); ++i) d += g[i] != m[i];
      far = far && d >= kMinGlyphDistance;
    }
    if (far) bank.push_back(std::move(m));
  }
  return bank;
}

}  // namespace

std::size_t SyntheticSpec::samples_per_frame() const {
  return static_cast<std::size_t>(std::llround(sample_rate / fps));
}

void SyntheticSpec::validate() const {
  if (vocab_size < 2 || vocab_size > 16) throw ConfigError("vocab_size", "vocab_size must be in [2,16]");
  if (frames_per_symbol < 2) throw ConfigError("frames_per_symbol", "frames_per_symbol must be >= 2");
  if (!(fps > 0.0)) throw ConfigError("fps", "fps must be positive");
  if (!(sample_rate >= 4000.0)) {
    throw ConfigError("sample_rate", "sample_rate must be >= 4000 Hz to hold the symbol chords");
  }
  const double spf = sample_rate / fps;
  if (std::abs(spf - std::round(spf)) > 1e-9) {
    throw ConfigError("sample_rate", "sample_rate / fps must be an integer");
  }
  if (min_symbols < 1 || min_symbols > max_symbols) {
    throw ConfigError("min_symbols", "need 1 <= min_symbols <= max_symbols");
  }
  if (image_h < 8 || image_w < 8) throw ConfigError("image_h", "image must be at least 8x8");
  const Rect& m = mouth_region;
  if (m.x0 < 0 || m.y0 < 0 || m.x1 > static_cast<int>(image_w) || m.y1 > static_cast<int>(image_h) ||
      m.width() < static_cast<int>(kGlyphCols) || m.height() < static_cast<int>(kGlyphRows)) {
    throw ConfigError("mouth_region", "mouth_region must lie inside the image and hold a 4x4 glyph");
  }
  if (!(jitter >= 0.0 && jitter < 0.2)) throw ConfigError("jitter", "jitter must be in [0, 0.2)");
}

const std::set<std::string>& SyntheticSpec::keys() {
  static const std::set<std::string> k{"vocab_size", "frames_per_symbol", "sample_rate", "fps",
                                       "min_symbols", "max_symbols", "image_h", "image_w",
                                       "mouth_region", "jitter", "data_seed"};
  return k;
}

SyntheticSpec SyntheticSpec::from_kv(const KeyValueConfig& kv) {
  SyntheticSpec s;
  auto count = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw ConfigError(key, std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  s.vocab_size = count("vocab_size", s.vocab_size);
  s.frames_per_symbol = count("frames_per_symbol", s.frames_per_symbol);
  s.sample_rate = kv.get_double("sample_rate", s.sample_rate);
  s.fps = kv.get_double("fps", s.fps);
  s.min_symbols = count("min_symbols", s.min_symbols);
  s.max_symbols = count("max_symbols", s.max_symbols);
  s.image_h = count("image_h", s.image_h);
  s.image_w = count("image_w", s.image_w);
  const auto m = kv.get_ints("mouth_region", {s.mouth_region.x0, s.mouth_region.y0,
                                              s.mouth_region.x1, s.mouth_region.y1});
  if (m.size() != 4) throw ConfigError("mouth_region", "mouth_region needs x0,y0,x1,y1");
  s.mouth_region = {static_cast<int>(m[0]), static_cast<int>(m[1]), static_cast<int>(m[2]),
                    static_cast<int>(m[3])};
  s.jitter = kv.get_double("jitter", s.jitter);
  s.seed = static_cast<std::uint64_t>(kv.get_int("data_seed", static_cast<long long>(s.seed)));
  s.validate();
  return s;
}

KeyValueConfig SyntheticSpec::to_kv() const {
  KeyValueConfig kv;
  kv.set("vocab_size", std::to_string(vocab_size));
  kv.set("frames_per_symbol", std::to_string(frames_per_symbol));
  kv.set("sample_rate", format_double(sample_rate));
  kv.set("fps", format_double(fps));
  kv.set("min_symbols", std::to_string(min_symbols));
  kv.set("max_symbols", std::to_string(max_symbols));
  kv.set("image_h", std::to_string(image_h));
  kv.set("image_w", std::to_string(image_w));
  kv.set("mouth_region", std::to_string(mouth_region.x0) + "," + std::to_string(mouth_region.y0) +
                             "," + std::to_string(mouth_region.x1) + "," +
                             std::to_string(mouth_region.y1));
  kv.set("jitter", format_double(jitter));
  kv.set("data_seed", std::to_string(seed));
  return kv;
}

std::pair<double, double> symbol_frequencies(const SyntheticSpec& spec, std::int64_t symbol) {
  const auto i = symbol - kFirstSymbol;
  if (i < 0 || static_cast<std::size_t>(i) >= spec.vocab_size) {
    throw Error("vocab", "symbol " + std::to_string(symbol) + " outside the synthetic vocabulary");
  }
  // (low, high) index pairs are distinct for the first 16 symbols.
  const auto lo = static_cast<double>(i % 4);
  const auto hi = static_cast<double>((i / 4 + i) % 4);
  return {250.0 + 150.0 * lo, 1050.0 + 200.0 * hi};
}

std::vector<double> synthesize_audio(const SyntheticSpec& spec,
                                     const std::vector<std::int64_t>& tokens, std::uint64_t seed) {
  const std::size_t per = spec.frames_per_symbol * spec.samples_per_frame();
  std::vector<double> out(per * tokens.size());
  Rng r(seed);
  const double ramp = std::max(1.0, 0.1 * static_cast<double>(per));
  for (std::size_t s = 0; s < tokens.size(); ++s) {
    auto [f1, f2] = symbol_frequencies(spec, tokens[s]);
    f1 *= 1.0 + spec.jitter * r.uniform(-1, 1);
    f2 *= 1.0 + spec.jitter * r.uniform(-1, 1);
    const double amp = 0.5 * (1.0 + spec.jitter * r.uniform(-1, 1));
    const double p1 = r.uniform(0, 2 * kPi), p2 = r.uniform(0, 2 * kPi);
    for (std::size_t n = 0; n < per; ++n) {
      const double x = static_cast<double>(n);
      const double edge = std::min(x + 0.5, static_cast<double>(per) - x - 0.5);
      const double env = edge >= ramp ? 1.0 : 0.5 - 0.5 * std::cos(kPi * edge / ramp);
      const double ph = 2 * kPi * x / spec.sample_rate;
      out[s * per + n] = amp * env * (std::sin(f1 * ph + p1) + 0.7 * std::sin(f2 * ph + p2)) +
                         0.01 * r.normal();
    }
  }
  return out;
}

VideoClip synthesize_video(const SyntheticSpec& spec, const std::vector<std::int64_t>& tokens,
                           std::uint64_t seed) {
  VideoClip v;
  v.frames_count = tokens.size() * spec.frames_per_symbol;
  v.height = spec.image_h;
  v.width = spec.image_w;
  v.channels = 1;
  v.fps = spec.fps;
  v.mouth_region = spec.mouth_region;
  v.frames.resize(v.frames_count * v.height * v.width);

  Rng r(seed);
  // Clip texture: a random low-frequency plaid plus fixed grain.
  const double kx = r.uniform(0.2, 0.8), ky = r.uniform(0.2, 0.8);
  const double px = r.uniform(0, 2 * kPi), py = r.uniform(0, 2 * kPi);
  const double base = r.uniform(0.4, 0.6);
  std::vector<double> texture(v.height * v.width);
  for (std::size_t y = 0; y < v.height; ++y) {
    for (std::size_t x = 0; x < v.width; ++x) {
      texture[y * v.width + x] = base + 0.08 * std::sin(kx * static_cast<double>(x) + px) *
                                            std::cos(ky * static_cast<double>(y) + py) +
                                 0.03 * r.uniform(-1, 1);
    }
  }

  const auto glyphs = glyph_bank(spec);
  for (auto tok : tokens) {
    if (tok < kFirstSymbol || tok >= static_cast<std::int64_t>(spec.model_vocab_size())) {
      throw Error("vocab", "synthesize_video: token " + std::to_string(tok) + " outside the synthetic vocabulary");
    }
  }
  const Rect& m = spec.mouth_region;
  const double cy = 0.5 * (m.y0 + m.y1);
  const double half_h = 0.5 * m.height();
  for (std::size_t t = 0; t < v.frames_count; ++t) {
    const std::size_t s = t / spec.frames_per_symbol, k = t % spec.frames_per_symbol;
    const auto sym = static_cast<std::size_t>(tokens[s] - kFirstSymbol);
    const auto& mask = glyphs[sym];
    // Ink brightness is a second per-symbol cue that survives spatial pooling.
    const double ink = 0.55 + 0.45 * static_cast<double>(sym) / static_cast<double>(spec.vocab_size - 1);
    const double open =
        0.35 + 0.65 * std::sin(kPi * (static_cast<double>(k) + 0.5) /
                               static_cast<double>(spec.frames_per_symbol));
    const double gain = 1.0 + spec.jitter * r.uniform(-1, 1);
    double* frame = v.frames.data() + t * v.height * v.width;
    std::copy(texture.begin(), texture.end(), frame);
    for (int y = m.y0; y < m.y1; ++y) {
      // Vertical squash about the mouth center: rows outside the opening show lips.
      const double src = (static_cast<double>(y) + 0.5 - cy) / open;
      for (int x = m.x0; x < m.x1; ++x) {
        double val = 0.25;
        if (std::abs(src) < half_h) {
          const auto row = static_cast<std::size_t>((src + half_h) / m.height() * kGlyphRows);
          const auto col = static_cast<std::size_t>(x - m.x0) * kGlyphCols / static_cast<std::size_t>(m.width());
          val = mask[std::min(row, kGlyphRows - 1) * kGlyphCols + col] ? ink : 0.1;
        }
        frame[static_cast<std::size_t>(y) * v.width + static_cast<std::size_t>(x)] = val * gain;
      }
    }
    for (std::size_t i = 0; i < v.height * v.width; ++i) frame[i] = std::clamp(frame[i], 0.0, 1.0);
  }
  return v;
}

Example make_example(const SyntheticSpec& spec, const std::string& split, std::size_t index) {
  spec.validate();
  const std::uint64_t seed = derive_seed(spec.seed, fnv1a64(split), index);
  Rng r(seed);
  Example e;
  char id[64];
  std::snprintf(id, sizeof id, "%s-%05zu", split.c_str(), index);
  e.clip_id = id;
  const auto n = static_cast<std::size_t>(
      r.uniform_int(static_cast<std::int64_t>(spec.min_symbols), static_cast<std::int64_t>(spec.max_symbols)));
  for (std::size_t i = 0; i < n; ++i) {
    e.tokens.push_back(kFirstSymbol + r.uniform_int(0, static_cast<std::int64_t>(spec.vocab_size) - 1));
  }
  e.audio.samples = synthesize_audio(spec, e.tokens, derive_seed(seed, 1));
  e.audio.sample_rate = spec.sample_rate;
  e.video = synthesize_video(spec, e.tokens, derive_seed(seed, 2));
  return e;
}

std::vector<Example> make_examples(const SyntheticSpec& spec, const std::string& split,
                                   std::size_t n, std::size_t workers) {
  if (n < 1) throw ConfigError("n_clips", "n_clips must be >= 1");
  std::vector<Example> out(n);
  parallel_for(n, workers, [&](std::size_t i) { out[i] = make_example(spec, split, i); });
  return out;
}

std::vector<double> make_babble(const SyntheticSpec& spec, std::size_t k_voices,
                                std::uint64_t seed, std::size_t length) {
  if (k_voices < 3) throw ConfigError("babble_voices", "babble needs at least 3 voices");
  if (length < 1) throw ConfigError("babble_length", "babble length must be >= 1");
  std::vector<double> mix(length, 0.0);
  for (std::size_t v = 0; v < k_voices; ++v) {
    Rng r(derive_seed(seed, 0xbab, v));
    // Random phase into the first utterance so voices do not start in lockstep
    // and the waveform has no silent lead-in.
    auto pos = -static_cast<std::int64_t>(r.uniform_int(0, static_cast<std::int64_t>(spec.samples_per_frame() * spec.frames_per_symbol)));
    const auto L = static_cast<std::int64_t>(length);
    for (std::size_t u = 0; pos < L; ++u) {
      std::vector<std::int64_t> toks;
      const auto n = r.uniform_int(static_cast<std::int64_t>(spec.min_symbols), static_cast<std::int64_t>(spec.max_symbols));
      for (std::int64_t i = 0; i < n; ++i) {
        toks.push_back(kFirstSymbol + r.uniform_int(0, static_cast<std::int64_t>(spec.vocab_size) - 1));
      }
      const auto a = synthesize_audio(spec, toks, derive_seed(seed, v, u, 0x5e));
      const double gain = r.uniform(0.6, 1.4);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const std::int64_t at = pos + static_cast<std::int64_t>(i);
        if (at >= 0 && at < L) mix[static_cast<std::size_t>(at)] += gain * a[i];
      }
      pos += static_cast<std::int64_t>(a.size());
    }
  }
  double ms = 0.0;
  for (double x : mix) ms += x * x;
  ms /= static_cast<double>(length);
  const double g = 1.0 / std::sqrt(ms);
  for (double& x : mix) x *= g;
  return mix;
}

std::vector<std::vector<double>> make_babble_bank(const SyntheticSpec& spec, std::size_t count,
                                                  std::size_t k_voices, std::uint64_t seed,
                                                  std::size_t length) {
  std::vector<std::vector<double>> bank;
  for (std::size_t i = 0; i < count; ++i) bank.push_back(make_babble(spec, k_voices, derive_seed(seed, i), length));
  return bank;
}

}  // namespace avrel
