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

#include "avrel/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace avrel {

// ---------------------------------------------------------------------------
// Clips

Image VideoClip::frame(std::size_t t) const {
  Image img{height, width, channels, {}};
  const auto n = frame_size();
  img.pixels.assign(frames.begin() + static_cast<std::ptrdiff_t>(t * n),
                    frames.begin() + static_cast<std::ptrdiff_t>((t + 1) * n));
  return img;
}

void VideoClip::set_frame(std::size_t t, const Image& img) {
  if (img.height != height || img.width != width || img.channels != channels) {
    throw ShapeError("video: frame size mismatch");
  }
  std::copy(img.pixels.begin(), img.pixels.end(),
            frames.begin() + static_cast<std::ptrdiff_t>(t * frame_size()));
}

void VideoClip::validate() const {
  if (frames_count < 1) throw SizingError("video: clip needs at least one frame");
  if (frames.size() != frames_count * frame_size()) {
    throw ShapeError("video: pixel buffer does not match T x H x W x C");
  }
  for (double p : frames) {
    if (!(p >= 0.0 && p <= 1.0)) throw NumericError("video: pixel outside [0,1]");
  }
  if (mouth_region.x0 < 0 || mouth_region.y0 < 0 ||
      mouth_region.x1 > static_cast<int>(width) || mouth_region.y1 > static_cast<int>(height) ||
      mouth_region.width() <= 0 || mouth_region.height() <= 0) {
    throw ShapeError("video: mouth region outside the frame");
  }
}

void AudioClip::validate() const {
  if (samples.empty()) throw SizingError("audio: clip needs at least one sample");
  for (double s : samples) {
    if (!std::isfinite(s)) throw NumericError("audio: non-finite sample");
  }
}

bool CorruptionPlan::visual_corrupted(std::size_t f) const {
  auto in = [f](const auto& s) { return f >= s.start && f < s.end; };
  return std::any_of(occlusion.begin(), occlusion.end(), in) ||
         std::any_of(blur.begin(), blur.end(), in) ||
         std::any_of(pixel_noise.begin(), pixel_noise.end(), in);
}

bool CorruptionPlan::audio_corrupted(std::size_t b, std::size_t e) const {
  return std::any_of(audio.begin(), audio.end(),
                     [b, e](const AudioSegment& s) { return s.start < e && b < s.end; });
}

// ---------------------------------------------------------------------------
// Config

const std::set<std::string>& CorruptionConfig::keys() {
  static const std::set<std::string> k{
      "max_occurrences", "ratio_min", "ratio_max", "p_occlusion", "p_blur",
      "p_noise",         "p_audio",   "sigma_min", "sigma_max",   "max_variance",
      "snr_set",         "patch_bank_size",        "noise_bank_size"};
  return k;
}

void CorruptionConfig::validate() const {
  auto prob = [](const char* key, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(key, std::string(key) + " must be in [0,1]");
  };
  if (max_occurrences < 1) throw ConfigError("max_occurrences", "max_occurrences must be >= 1");
  if (!(ratio_min > 0.0 && ratio_min <= ratio_max && ratio_max < 1.0)) {
    throw ConfigError("ratio_min", "ratio range must satisfy 0 < ratio_min <= ratio_max < 1");
  }
  prob("p_occlusion", p_occlusion);
  prob("p_blur", p_blur);
  prob("p_noise", p_noise);
  prob("p_audio", p_audio);
  if (!(sigma_min > 0.0 && sigma_min <= sigma_max)) {
    throw ConfigError("sigma_min", "sigma range must satisfy 0 < sigma_min <= sigma_max");
  }
  if (!(max_variance > 0.0 && max_variance <= 0.2)) {
    throw ConfigError("max_variance", "max_variance must be in (0, 0.2]");
  }
  if (snr_set.empty()) throw ConfigError("snr_set", "snr_set must not be empty");
  if (patch_bank_size < 1) throw ConfigError("patch_bank_size", "patch_bank_size must be >= 1");
  if (noise_bank_size < 1) throw ConfigError("noise_bank_size", "noise_bank_size must be >= 1");
}

CorruptionConfig CorruptionConfig::from_kv(const KeyValueConfig& kv) {
  CorruptionConfig c;
  c.max_occurrences = static_cast<int>(kv.get_int("max_occurrences", c.max_occurrences));
  c.ratio_min = kv.get_double("ratio_min", c.ratio_min);
  c.ratio_max = kv.get_double("ratio_max", c.ratio_max);
  c.p_occlusion = kv.get_double("p_occlusion", c.p_occlusion);
  c.p_blur = kv.get_double("p_blur", c.p_blur);
  c.p_noise = kv.get_double("p_noise", c.p_noise);
  c.p_audio = kv.get_double("p_audio", c.p_audio);
  c.sigma_min = kv.get_double("sigma_min", c.sigma_min);
  c.sigma_max = kv.get_double("sigma_max", c.sigma_max);
  c.max_variance = kv.get_double("max_variance", c.max_variance);
  c.snr_set = kv.get_doubles("snr_set", c.snr_set);
  c.patch_bank_size = static_cast<std::size_t>(kv.get_int("patch_bank_size", 16));
  c.noise_bank_size = static_cast<std::size_t>(kv.get_int("noise_bank_size", 4));
  c.validate();
  return c;
}

KeyValueConfig CorruptionConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("max_occurrences", std::to_string(max_occurrences));
  kv.set("ratio_min", format_double(ratio_min));
  kv.set("ratio_max", format_double(ratio_max));
  kv.set("p_occlusion", format_double(p_occlusion));
  kv.set("p_blur", format_double(p_blur));
  kv.set("p_noise", format_double(p_noise));
  kv.set("p_audio", format_double(p_audio));
  kv.set("sigma_min", format_double(sigma_min));
  kv.set("sigma_max", format_double(sigma_max));
  kv.set("max_variance", format_double(max_variance));
  kv.set("snr_set", join_doubles(snr_set));
  kv.set("patch_bank_size", std::to_string(patch_bank_size));
  kv.set("noise_bank_size", std::to_string(noise_bank_size));
  return kv;
}

// ---------------------------------------------------------------------------
// Scheduling

namespace {

std::pair<std::size_t, std::size_t> span_length_bounds(std::size_t len, double rmin,
                                                       double rmax) {
  const auto lo = static_cast<std::size_t>(std::ceil(rmin * static_cast<double>(len) - 1e-9));
  const auto hi = static_cast<std::size_t>(std::floor(rmax * static_cast<double>(len) + 1e-9));
  return {lo, hi};
}

void check_schedulable(const char* stream, std::size_t length, int max_occ, double rmin,
                       double rmax) {
  for (int n = 1; n <= max_occ; ++n) {
    for (int d = 0; d < n; ++d) {
      const std::size_t b = length * d / n, e = length * (d + 1) / n;
      auto [lo, hi] = span_length_bounds(e - b, rmin, rmax);
      if (lo < 1 || lo > hi) {
        throw SizingError(std::string(stream) + " length " + std::to_string(length) +
                          " is too short for " + std::to_string(n) +
                          " corruption chunks (division of " + std::to_string(e - b) + ")");
      }
    }
  }
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> schedule_spans(Rng& rng, std::size_t length,
                                                                int occurrences, double rmin,
                                                                double rmax) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  const auto n = static_cast<std::size_t>(occurrences);
  for (std::size_t d = 0; d < n; ++d) {
    const std::size_t b = length * d / n, e = length * (d + 1) / n;
    const std::size_t len = e - b;
    auto [lo, hi] = span_length_bounds(len, rmin, rmax);
    if (lo < 1 || lo > hi) throw SizingError("schedule: division too short to corrupt");
    const double t = rng.uniform(rmin, rmax);
    auto span = static_cast<std::size_t>(std::llround(t * static_cast<double>(len)));
    span = std::clamp(span, lo, hi);
    const auto start = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(b), static_cast<std::int64_t>(e - span)));
    spans.emplace_back(start, start + span);
  }
  return spans;
}

CorruptionPlan plan_corruption(std::uint64_t seed, std::size_t frames, std::size_t samples,
                               const CorruptionConfig& cfg) {
  cfg.validate();
  check_schedulable("video", frames, cfg.max_occurrences, cfg.ratio_min, cfg.ratio_max);
  check_schedulable("audio", samples, cfg.max_occurrences, cfg.ratio_min, cfg.ratio_max);
  CorruptionPlan plan;
  plan.seed = seed;
  // Each corruption type draws from its own stream so toggling one
  // probability leaves the others' schedules unchanged.
  auto occurrences = [&](Rng& r) {
    return static_cast<int>(r.uniform_int(1, cfg.max_occurrences));
  };
  {
    Rng r(derive_seed(seed, 1));
    if (r.bernoulli(cfg.p_occlusion)) {
      for (auto [b, e] : schedule_spans(r, frames, occurrences(r), cfg.ratio_min, cfg.ratio_max)) {
        OcclusionSegment s{b, e, 0, 0.5, 0.5};
        s.patch_id = static_cast<std::size_t>(
            r.uniform_int(0, static_cast<std::int64_t>(cfg.patch_bank_size) - 1));
        s.u = r.uniform();
        s.v = r.uniform();
        plan.occlusion.push_back(s);
      }
    }
  }
  {
    Rng r(derive_seed(seed, 2));
    if (r.bernoulli(cfg.p_blur)) {
      for (auto [b, e] : schedule_spans(r, frames, occurrences(r), cfg.ratio_min, cfg.ratio_max)) {
        plan.blur.push_back({b, e, r.uniform(cfg.sigma_min, cfg.sigma_max)});
      }
    }
  }
  {
    Rng r(derive_seed(seed, 3));
    if (r.bernoulli(cfg.p_noise)) {
      for (auto [b, e] : schedule_spans(r, frames, occurrences(r), cfg.ratio_min, cfg.ratio_max)) {
        plan.pixel_noise.push_back({b, e, cfg.max_variance * (1.0 - r.uniform())});
      }
    }
  }
  {
    Rng r(derive_seed(seed, 4));
    if (r.bernoulli(cfg.p_audio)) {
      for (auto [b, e] : schedule_spans(r, samples, occurrences(r), cfg.ratio_min, cfg.ratio_max)) {
        AudioSegment s{b, e, 0, 0.0};
        s.noise_id = static_cast<std::size_t>(
            r.uniform_int(0, static_cast<std::int64_t>(cfg.noise_bank_size) - 1));
        s.snr_db = cfg.snr_set[static_cast<std::size_t>(
            r.uniform_int(0, static_cast<std::int64_t>(cfg.snr_set.size()) - 1))];
        plan.audio.push_back(s);
      }
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Audio

AudioClip mix_at_snr(const AudioClip& signal, std::span<const double> noise, double snr_db,
                     std::size_t span_begin, std::size_t span_end) {
  if (span_begin >= span_end || span_end > signal.samples.size()) {
    throw SizingError("mix_at_snr: span [" + std::to_string(span_begin) + ", " +
                      std::to_string(span_end) + ") outside signal of " +
                      std::to_string(signal.samples.size()) + " samples");
  }
  const std::size_t n = span_end - span_begin;
  if (noise.size() < n) throw SizingError("mix_at_snr: noise shorter than span");
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db", "mix_at_snr: SNR must be finite");
  double ps = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ps += signal.samples[span_begin + i] * signal.samples[span_begin + i];
    pn += noise[i] * noise[i];
  }
  ps /= static_cast<double>(n);
  pn /= static_cast<double>(n);
  if (!(pn > 0.0)) throw NumericError("mix_at_snr: noise has zero power over the span");
  if (!(ps > 0.0)) throw NumericError("mix_at_snr: signal has zero power over the span");
  const double gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  AudioClip out = signal;
  for (std::size_t i = 0; i < n; ++i) out.samples[span_begin + i] += gain * noise[i];
  return out;
}

// ---------------------------------------------------------------------------
// Video

Image apply_occlusion(const Image& frame, const OcclusionPatch& patch, int x, int y) {
  const auto& p = patch.pixels;
  if (p.height > frame.height || p.width > frame.width) {
    throw ShapeError("apply_occlusion: patch " + std::to_string(p.height) + "x" +
                     std::to_string(p.width) + " larger than frame " +
                     std::to_string(frame.height) + "x" + std::to_string(frame.width));
  }
  if (p.channels != frame.channels) throw ShapeError("apply_occlusion: channel mismatch");
  if (patch.alpha.size() != p.height * p.width) {
    throw ShapeError("apply_occlusion: alpha mask does not match patch");
  }
  x = std::clamp(x, 0, static_cast<int>(frame.width - p.width));
  y = std::clamp(y, 0, static_cast<int>(frame.height - p.height));
  Image out = frame;
  for (std::size_t r = 0; r < p.height; ++r) {
    for (std::size_t c = 0; c < p.width; ++c) {
      const double a = patch.alpha[r * p.width + c];
      for (std::size_t ch = 0; ch < p.channels; ++ch) {
        double& dst = out.at(static_cast<std::size_t>(y) + r, static_cast<std::size_t>(x) + c, ch);
        dst = std::clamp(a * p.at(r, c, ch) + (1.0 - a) * dst, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::pair<int, int> occlusion_position(const Rect& mouth, std::size_t patch_h,
                                       std::size_t patch_w, double u, double v) {
  const double half_w = static_cast<double>(patch_w) / 2.0;
  const double half_h = static_cast<double>(patch_h) / 2.0;
  const double cx = mouth.x0 - half_w + u * (mouth.width() + 2.0 * half_w);
  const double cy = mouth.y0 - half_h + v * (mouth.height() + 2.0 * half_h);
  return {static_cast<int>(std::lround(cx - half_w)), static_cast<int>(std::lround(cy - half_h))};
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("sigma", "gaussian_blur: sigma must be positive");
  std::vector<double> k(kBlurKernelSize);
  const int r = kBlurKernelSize / 2;
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    s += k[i + r];
  }
  for (auto& v : k) v /= s;
  return k;
}

namespace {

// Mirror without repeating the edge sample (.. 2 1 | 0 1 2 .. n-1 | n-2 ..).
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (m == 1) return 0;
  while (i < 0 || i >= m) {
    if (i < 0) i = -i;
    if (i >= m) i = 2 * m - 2 - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

Image gaussian_blur(const Image& frame, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = kBlurKernelSize / 2;
  Image tmp = frame, out = frame;
  for (std::size_t y = 0; y < frame.height; ++y)
    for (std::size_t x = 0; x < frame.width; ++x)
      for (std::size_t c = 0; c < frame.channels; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) {
          s += k[i + r] * frame.at(y, reflect(static_cast<std::ptrdiff_t>(x) + i, frame.width), c);
        }
        tmp.at(y, x, c) = s;
      }
  for (std::size_t y = 0; y < frame.height; ++y)
    for (std::size_t x = 0; x < frame.width; ++x)
      for (std::size_t c = 0; c < frame.channels; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) {
          s += k[i + r] * tmp.at(reflect(static_cast<std::ptrdiff_t>(y) + i, frame.height), x, c);
        }
        out.at(y, x, c) = std::clamp(s, 0.0, 1.0);
      }
  return out;
}

std::vector<double> pixel_noise_field(std::size_t count, double variance, std::uint64_t seed) {
  if (!(variance > 0.0 && variance <= 0.2)) {
    throw ConfigError("variance", "add_pixel_noise: variance must be in (0, 0.2]");
  }
  Rng rng(seed);
  const double sd = std::sqrt(variance);
  std::vector<double> n(count);
  for (auto& v : n) v = sd * rng.normal();
  return n;
}

Image add_pixel_noise(const Image& frame, double variance, std::uint64_t seed) {
  const auto n = pixel_noise_field(frame.pixels.size(), variance, seed);
  Image out = frame;
  for (std::size_t i = 0; i < n.size(); ++i) out.pixels[i] = std::clamp(out.pixels[i] + n[i], 0.0, 1.0);
  return out;
}

std::vector<OcclusionPatch> make_patch_bank(std::size_t count, std::uint64_t seed,
                                            std::size_t channels) {
  std::vector<OcclusionPatch> bank;
  for (std::size_t id = 0; id < count; ++id) {
    Rng r(derive_seed(seed, 0x9a7c, id));
    const auto h = static_cast<std::size_t>(r.uniform_int(8, 14));
    const auto w = static_cast<std::size_t>(r.uniform_int(8, 14));
    OcclusionPatch p{id, Image::filled(h, w, channels, 0.0), std::vector<double>(h * w, 1.0)};
    const double base = r.uniform(0.0, 1.0);
    const double other = r.uniform(0.0, 1.0);
    const int period = static_cast<int>(r.uniform_int(2, 4));
    const bool vertical = r.bernoulli(0.5);
    std::vector<int> glyph(16);
    for (auto& g : glyph) g = r.bernoulli(0.5) ? 1 : 0;
    const double cy = (static_cast<double>(h) - 1) / 2, cx = (static_cast<double>(w) - 1) / 2;
    const double rad = static_cast<double>(std::min(h, w)) / 2.0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double value = base, alpha = 1.0;
        switch (id % 5) {
          case 0: {  // disc with a soft rim
            const double d = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
            alpha = d <= rad - 1 ? 1.0 : (d <= rad ? 0.5 : 0.0);
            break;
          }
          case 1:  // solid rectangle
            break;
          case 2: {  // stripes
            const auto coord = static_cast<int>(vertical ? x : y);
            value = (coord / period) % 2 ? other : base;
            break;
          }
          case 3:  // checker, slightly translucent
            value = ((x / period) + (y / period)) % 2 ? other : base;
            alpha = 0.85;
            break;
          default: {  // glyph-like blob
            const std::size_t gy = y * 4 / h, gx = x * 4 / w;
            const bool on = glyph[gy * 4 + gx] != 0;
            value = on ? other : base;
            alpha = on ? 1.0 : 0.6;
            break;
          }
        }
        for (std::size_t c = 0; c < channels; ++c) p.pixels.at(y, x, c) = value;
        p.alpha[y * w + x] = alpha;
      }
    }
    bank.push_back(std::move(p));
  }
  return bank;
}

std::pair<VideoClip, AudioClip> corrupt_pair(const VideoClip& video, const AudioClip& audio,
                                             const CorruptionPlan& plan,
                                             std::span<const OcclusionPatch> patches,
                                             std::span<const std::vector<double>> noise_bank) {
  const std::size_t T = video.frames_count, S = audio.samples.size();
  auto check_frames = [T](std::size_t b, std::size_t e) {
    if (b >= e || e > T) throw SizingError("corrupt_pair: video segment outside clip");
  };
  auto find_patch = [&](std::size_t id) -> const OcclusionPatch& {
    for (const auto& p : patches) {
      if (p.patch_id == id) return p;
    }
    throw Error("bank", "corrupt_pair: patch_id " + std::to_string(id) + " missing from bank");
  };
  for (const auto& s : plan.occlusion) {
    check_frames(s.start, s.end);
    find_patch(s.patch_id);
  }
  for (const auto& s : plan.blur) check_frames(s.start, s.end);
  for (const auto& s : plan.pixel_noise) check_frames(s.start, s.end);
  for (const auto& s : plan.audio) {
    if (s.start >= s.end || s.end > S) throw SizingError("corrupt_pair: audio segment outside clip");
    if (s.noise_id >= noise_bank.size()) {
      throw Error("bank", "corrupt_pair: noise_id " + std::to_string(s.noise_id) +
                              " missing from bank");
    }
    if (noise_bank[s.noise_id].size() < s.end - s.start) {
      throw SizingError("corrupt_pair: babble waveform shorter than audio segment");
    }
  }

  VideoClip v = video;
  if (!plan.occlusion.empty() || !plan.blur.empty() || !plan.pixel_noise.empty()) {
    for (std::size_t t = 0; t < T; ++t) {
      if (!plan.visual_corrupted(t)) continue;
      Image img = video.frame(t);
      for (const auto& s : plan.occlusion) {
        if (t < s.start || t >= s.end) continue;
        const auto& p = find_patch(s.patch_id);
        auto [x, y] = occlusion_position(video.mouth_region, p.pixels.height, p.pixels.width,
                                         s.u, s.v);
        img = apply_occlusion(img, p, x, y);
      }
      for (const auto& s : plan.blur) {
        if (t >= s.start && t < s.end) img = gaussian_blur(img, s.sigma);
      }
      for (std::size_t i = 0; i < plan.pixel_noise.size(); ++i) {
        const auto& s = plan.pixel_noise[i];
        if (t >= s.start && t < s.end) {
          img = add_pixel_noise(img, s.variance, derive_seed(plan.seed, 0xa0, t, i));
        }
      }
      v.set_frame(t, img);
    }
  }

  AudioClip a = audio;
  for (const auto& s : plan.audio) {
    const auto& noise = noise_bank[s.noise_id];
    const std::size_t len = s.end - s.start;
    const std::size_t offset = s.start % (noise.size() - len + 1);
    a = mix_at_snr(a, std::span<const double>(noise).subspan(offset, len), s.snr_db, s.start,
                   s.end);
  }
  return {std::move(v), std::move(a)};
}

// ---------------------------------------------------------------------------
// JSON-lines

std::string plan_to_json(const std::string& clip_id, const CorruptionPlan& plan) {
  using nlohmann::json;
  json j;
  j["clip_id"] = clip_id;
  j["seed"] = plan.seed;
  j["occlusion"] = json::array();
  for (const auto& s : plan.occlusion) {
    j["occlusion"].push_back({{"start", s.start}, {"end", s.end}, {"patch_id", s.patch_id},
                              {"u", s.u}, {"v", s.v}});
  }
  j["blur"] = json::array();
  for (const auto& s : plan.blur) {
    j["blur"].push_back({{"start", s.start}, {"end", s.end}, {"sigma", s.sigma}});
  }
  j["pixel_noise"] = json::array();
  for (const auto& s : plan.pixel_noise) {
    j["pixel_noise"].push_back({{"start", s.start}, {"end", s.end}, {"variance", s.variance}});
  }
  j["audio"] = json::array();
  for (const auto& s : plan.audio) {
    j["audio"].push_back({{"start", s.start}, {"end", s.end}, {"noise_id", s.noise_id},
                          {"snr_db", s.snr_db}});
  }
  return j.dump();
}

std::pair<std::string, CorruptionPlan> plan_from_json(const std::string& line) {
  using nlohmann::json;
  CorruptionPlan plan;
  std::string id;
  try {
    const json j = json::parse(line);
    id = j.at("clip_id").get<std::string>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("occlusion")) {
      plan.occlusion.push_back({s.at("start"), s.at("end"), s.at("patch_id"), s.at("u"), s.at("v")});
    }
    for (const auto& s : j.at("blur")) plan.blur.push_back({s.at("start"), s.at("end"), s.at("sigma")});
    for (const auto& s : j.at("pixel_noise")) {
      plan.pixel_noise.push_back({s.at("start"), s.at("end"), s.at("variance")});
    }
    for (const auto& s : j.at("audio")) {
      plan.audio.push_back({s.at("start"), s.at("end"), s.at("noise_id"), s.at("snr_db")});
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("plan: malformed JSON line: ") + e.what());
  }
  return {id, plan};
}

}  // namespace avrel
