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

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avrel/common.hpp"
#include "avrel/kvconfig.hpp"

namespace avrel {

// Half-open pixel rectangle [x0, x1) x [y0, y1); x is the column.
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const Rect&) const = default;
};

// One H x W x C image, values in [0, 1].
struct Image {
  std::size_t height = 0, width = 0, channels = 1;
  std::vector<double> pixels;

  static Image filled(std::size_t h, std::size_t w, std::size_t c, double v) {
    return {h, w, c, std::vector<double>(h * w * c, v)};
  }
  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
};

struct VideoClip {
  std::size_t frames_count = 0, height = 0, width = 0, channels = 1;
  std::vector<double> frames;  // [T x H x W x C]
  Rect mouth_region;
  double fps = 25.0;

  std::size_t frame_size() const { return height * width * channels; }
  Image frame(std::size_t t) const;
  void set_frame(std::size_t t, const Image& img);
  void validate() const;
};

struct AudioClip {
  std::vector<double> samples;
  double sample_rate = 4000.0;
  void validate() const;
};

struct OcclusionPatch {
  std::size_t patch_id = 0;
  Image pixels;
  std::vector<double> alpha;  // [h x w]
};

struct OcclusionSegment {
  std::size_t start = 0, end = 0;  // frames, half-open
  std::size_t patch_id = 0;
  double u = 0.5, v = 0.5;  // normalized placement inside the dilated mouth region
  bool operator==(const OcclusionSegment&) const = default;
};

struct BlurSegment {
  std::size_t start = 0, end = 0;
  double sigma = 1.0;
  bool operator==(const BlurSegment&) const = default;
};

struct PixelNoiseSegment {
  std::size_t start = 0, end = 0;
  double variance = 0.1;
  bool operator==(const PixelNoiseSegment&) const = default;
};

struct AudioSegment {
  std::size_t start = 0, end = 0;  // samples, half-open
  std::size_t noise_id = 0;
  double snr_db = 0.0;
  bool operator==(const AudioSegment&) const = default;
};

struct CorruptionPlan {
  std::uint64_t seed = 0;
  std::vector<OcclusionSegment> occlusion;
  std::vector<BlurSegment> blur;
  std::vector<PixelNoiseSegment> pixel_noise;
  std::vector<AudioSegment> audio;

  bool empty() const {
    return occlusion.empty() && blur.empty() && pixel_noise.empty() && audio.empty();
  }
  bool visual_corrupted(std::size_t frame) const;
  bool audio_corrupted(std::size_t sample_begin, std::size_t sample_end) const;
  bool operator==(const CorruptionPlan&) const = default;
};

struct CorruptionConfig {
  int max_occurrences = 3;
  double ratio_min = 0.3;
  double ratio_max = 0.5;
  double p_occlusion = 0.8;
  double p_blur = 0.3;
  double p_noise = 0.3;
  double p_audio = 0.8;
  double sigma_min = 0.1;
  double sigma_max = 2.0;
  double max_variance = 0.2;
  std::vector<double> snr_set{-5, 0, 5, 10, 15, 20};
  std::size_t patch_bank_size = 16;
  std::size_t noise_bank_size = 4;

  void validate() const;
  static CorruptionConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  static const std::set<std::string>& keys();
};

// Segment bounds for one corruption type on a stream of `length` units:
// `length` is split into N even divisions and each division gets one span
// whose fraction of the division lies in [ratio_min, ratio_max].
std::vector<std::pair<std::size_t, std::size_t>> schedule_spans(
    Rng& rng, std::size_t length, int occurrences, double ratio_min, double ratio_max);

CorruptionPlan plan_corruption(std::uint64_t seed, std::size_t frames,
                               std::size_t samples, const CorruptionConfig& cfg);

// Returns `signal` with `noise * g` added over [span_begin, span_end), g set so
// the mean-square power ratio over the span equals `snr_db`.
AudioClip mix_at_snr(const AudioClip& signal, std::span<const double> noise,
                     double snr_db, std::size_t span_begin, std::size_t span_end);

// Alpha-blends `patch` with its top-left corner at (x, y), clamped so the
// patch lies inside the frame.
Image apply_occlusion(const Image& frame, const OcclusionPatch& patch, int x, int y);

// Top-left corner for a patch whose center is sampled from the mouth region
// dilated by half the patch size; (u, v) in [0,1]^2 selects the center.
std::pair<int, int> occlusion_position(const Rect& mouth, std::size_t patch_h,
                                       std::size_t patch_w, double u, double v);

inline constexpr int kBlurKernelSize = 7;

std::vector<double> gaussian_kernel(double sigma);
Image gaussian_blur(const Image& frame, double sigma);
// The unclamped Gaussian field added by add_pixel_noise.
std::vector<double> pixel_noise_field(std::size_t count, double variance, std::uint64_t seed);
Image add_pixel_noise(const Image& frame, double variance, std::uint64_t seed);

// Procedural occluder bank: discs, rectangles, striped and checkered
// rectangles and glyph-like blobs, each with an alpha mask.
std::vector<OcclusionPatch> make_patch_bank(std::size_t count, std::uint64_t seed,
                                            std::size_t channels = 1);

std::pair<VideoClip, AudioClip> corrupt_pair(const VideoClip& video, const AudioClip& audio,
                                             const CorruptionPlan& plan,
                                             std::span<const OcclusionPatch> patches,
                                             std::span<const std::vector<double>> noise_bank);

std::string plan_to_json(const std::string& clip_id, const CorruptionPlan& plan);
std::pair<std::string, CorruptionPlan> plan_from_json(const std::string& line);

}  // namespace avrel
