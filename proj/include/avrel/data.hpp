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
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avrel/corruption.hpp"
#include "avrel/decoding.hpp"
#include "avrel/kvconfig.hpp"
#include "avrel/model.hpp"
#include "avrel/tensor.hpp"
#include "avrel/training.hpp"

namespace avrel {

// ---------------------------------------------------------------------------
// Synthetic paired audio-visual data

struct SyntheticSpec {
  std::size_t vocab_size = 8;  // symbols; model vocabulary is this + kFirstSymbol
  std::size_t frames_per_symbol = 3;
  double sample_rate = 4000.0;
  double fps = 25.0;
  std::size_t min_symbols = 2, max_symbols = 8;
  std::size_t image_h = 24, image_w = 24;
  Rect mouth_region{4, 8, 20, 22};
  double jitter = 0.02;  // relative frequency / amplitude jitter
  std::uint64_t seed = 1;

  std::size_t samples_per_frame() const;
  std::size_t model_vocab_size() const { return vocab_size + static_cast<std::size_t>(kFirstSymbol); }
  void validate() const;
  static SyntheticSpec from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  static const std::set<std::string>& keys();
};

// Two-tone chord of a symbol (Hz).
std::pair<double, double> symbol_frequencies(const SyntheticSpec& spec, std::int64_t symbol);

// Audio for a token sequence: one chord per symbol, frames_per_symbol
// frames long, with seeded phase/frequency/amplitude jitter.
std::vector<double> synthesize_audio(const SyntheticSpec& spec,
                                     const std::vector<std::int64_t>& tokens, std::uint64_t seed);
// Video for a token sequence: a per-symbol glyph opening and closing inside
// the mouth region over a per-clip texture.
VideoClip synthesize_video(const SyntheticSpec& spec, const std::vector<std::int64_t>& tokens,
                           std::uint64_t seed);

// Clip `index` of a split; pure function of (spec, split, index).
Example make_example(const SyntheticSpec& spec, const std::string& split, std::size_t index);
std::vector<Example> make_examples(const SyntheticSpec& spec, const std::string& split,
                                   std::size_t n, std::size_t workers = 1);

// Sum of `k_voices` random synthetic utterances, normalized to RMS 1.
std::vector<double> make_babble(const SyntheticSpec& spec, std::size_t k_voices,
                                std::uint64_t seed, std::size_t length);
std::vector<std::vector<double>> make_babble_bank(const SyntheticSpec& spec, std::size_t count,
                                                  std::size_t k_voices, std::uint64_t seed,
                                                  std::size_t length);

// ---------------------------------------------------------------------------
// Media container and manifests

// "AVT1" container: 4-byte magic, u64 rank, rank x u64 extents, raw doubles,
// all little-endian.
void write_avt1(const std::string& path, const Shape& shape, std::span<const double> data);
std::pair<Shape, std::vector<double>> read_avt1(const std::string& path);

struct ManifestEntry {
  std::string clip_id;
  std::string video_path, audio_path;  // relative to the manifest directory
  std::vector<std::int64_t> transcript;
  std::size_t frames = 0, samples = 0;
  Rect mouth_region;
  double fps = 25.0, sample_rate = 4000.0;
};

std::string manifest_entry_to_json(const ManifestEntry& e);
ManifestEntry manifest_entry_from_json(const std::string& line);

// Writes media files and `<dir>/<split>.jsonl`; entries sorted by clip_id.
std::vector<ManifestEntry> write_dataset(const std::vector<Example>& examples,
                                         const std::string& dir, const std::string& split);
std::vector<ManifestEntry> read_manifest(const std::string& path);
// Loads every entry, checking that files exist and lengths match.
std::vector<Example> load_dataset(const std::string& manifest_path, std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Scoring

struct EditCounts {
  std::size_t substitutions = 0, deletions = 0, insertions = 0, reference_length = 0;
  std::size_t errors() const { return substitutions + deletions + insertions; }
};

// Levenshtein alignment with unit costs. Among optimal alignments the
// counts prefer substitutions, then deletions, then insertions.
EditCounts edit_counts(const std::vector<std::int64_t>& ref, const std::vector<std::int64_t>& hyp);
// 100 * (S + D + I) / N; empty reference is an error.
double wer(const std::vector<std::int64_t>& ref, const std::vector<std::int64_t>& hyp);

// ---------------------------------------------------------------------------
// Evaluation grid

enum class VisualCondition { kClean, kOcclusion, kNoise, kBoth };
std::string visual_condition_name(VisualCondition v);
VisualCondition parse_visual_condition(const std::string& s);

struct EvalCondition {
  VisualCondition visual = VisualCondition::kClean;
  std::optional<double> snr_db;  // empty = clean audio
  std::string name() const;      // e.g. "both/-5", "clean/clean"
};

// Visual conditions x {clean, 15, 10, 5, 0, -5} dB; clean/clean once.
std::vector<EvalCondition> table_conditions();

// Deterministic test-time corruption of one clip: the training scheduler
// with the condition's corruption types forced on and, for a noisy
// condition, every babble chunk at the requested SNR.
std::pair<VideoClip, AudioClip> corrupt_for_condition(const Example& ex, const EvalCondition& c,
                                                      const std::vector<OcclusionPatch>& patches,
                                                      const std::vector<std::vector<double>>& babble,
                                                      std::uint64_t seed, CorruptionPlan* plan_out = nullptr);

struct ClipResult {
  std::string clip_id;
  std::vector<std::int64_t> reference, hypothesis;
  EditCounts edits;
  DecodeRecord record;
};

struct EvalReport {
  std::string model;
  EvalCondition condition;
  double wer = 0.0;
  std::size_t n_utts = 0;
  std::vector<ClipResult> rows;  // sorted by clip_id
};

struct GridModel {
  std::string name;
  AvRelModel* model = nullptr;
};

struct GridResources {
  std::vector<OcclusionPatch> patches;
  std::vector<std::vector<double>> babble;
  const NGramLM* lm = nullptr;
  DecodeConfig decode;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

EvalReport evaluate_condition(const GridModel& m, const std::vector<Example>& test,
                              const EvalCondition& c, const GridResources& res);
std::vector<EvalReport> run_grid(const std::vector<GridModel>& models,
                                 const std::vector<Example>& test,
                                 const std::vector<EvalCondition>& conditions,
                                 const GridResources& res);

// One row per (model, visual condition), one column per SNR.
std::string grid_table_csv(const std::vector<EvalReport>& reports);
// Long format: model,condition,visual,snr,wer,n_utts,errors,ref_words.
std::string grid_long_csv(const std::vector<EvalReport>& reports);

// ---------------------------------------------------------------------------
// Reliability traces

struct ReliabilityRow {
  std::string clip_id;
  std::size_t frame = 0;
  double s_a_mean = 0.0, s_v_mean = 0.0;
  bool audio_corrupted = false, visual_corrupted = false;
};

// Runs the (eval-mode) model on each corrupted clip and aligns the per-frame
// score means with the plan's segments. Rows sorted by (clip_id, frame).
std::vector<ReliabilityRow> export_reliability(AvRelModel& model, const std::vector<Example>& clips,
                                               const std::vector<CorruptionPlan>& plans,
                                               const std::vector<OcclusionPatch>& patches,
                                               const std::vector<std::vector<double>>& babble,
                                               std::size_t workers = 1);
std::string reliability_csv(const std::vector<ReliabilityRow>& rows);

struct PairedTest {
  std::size_t n = 0;      // pairs used
  double mean_diff = 0.0;  // corrupted minus clean
  double t = 0.0;
  double p_one_sided = 1.0;  // P(T <= t) under H0
};

// t-test on per-clip (mean over corrupted frames - mean over clean frames),
// using clips that have both kinds of frames.
PairedTest reliability_paired_test(const std::vector<ReliabilityRow>& rows, Modality m);
// Student-t CDF.
double student_t_cdf(double t, double dof);

}  // namespace avrel
