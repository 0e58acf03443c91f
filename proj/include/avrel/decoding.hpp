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
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "avrel/kvconfig.hpp"
#include "avrel/model.hpp"

namespace avrel {

struct DecodeConfig {
  std::size_t beam_width = 40;
  double alpha = 0.9;  // attention weight; CTC gets 1 - alpha
  double beta = 0.1;   // LM weight
  std::size_t max_len = 12;  // decoder steps, eos included
  bool normalize_by_length = false;

  void validate() const;
  static DecodeConfig from_kv(const KeyValueConfig& kv);
  KeyValueConfig to_kv() const;
  static const std::set<std::string>& keys();
};

struct Hypothesis {
  std::vector<std::int64_t> tokens;  // emitted tokens; ends with kEos when finished
  double score_att = 0.0;
  double score_ctc = 0.0;
  double score_lm = 0.0;
  double combined = 0.0;
  bool finished() const { return !tokens.empty() && tokens.back() == kEos; }
  // `tokens` without a trailing eos.
  std::vector<std::int64_t> symbols() const;
};

// alpha * att + (1 - alpha) * ctc + beta * lm, where a zero weight drops its
// term entirely (so an impossible CTC prefix does not poison alpha = 1).
double combine_scores(double att, double ctc, double lm, double alpha, double beta);

// ---------------------------------------------------------------------------
// Language model

// Add-k smoothed n-gram model over the symbols of the model vocabulary plus
// eos. Contexts are padded on the left with sos.
class NGramLM {
 public:
  NGramLM() = default;
  NGramLM(std::size_t order, double add_k, std::size_t vocab_size);

  std::size_t order() const { return order_; }
  double add_k() const { return add_k_; }
  std::size_t vocab_size() const { return vocab_size_; }
  // Tokens the model can predict: symbols and eos.
  std::vector<std::int64_t> predicted_tokens() const;

  void add_sentence(std::span<const std::int64_t> symbols);
  // log p(token | last order-1 tokens of history); history holds symbols
  // only. Tokens outside the predicted set get -inf.
  double log_prob(std::span<const std::int64_t> history, std::int64_t token) const;

  std::string to_json() const;
  static NGramLM from_json(const std::string& text);
  void save(const std::string& path) const;
  static NGramLM load(const std::string& path);

 private:
  std::vector<std::int64_t> context_of(std::span<const std::int64_t> history) const;

  std::size_t order_ = 1;
  double add_k_ = 0.1;
  std::size_t vocab_size_ = 0;
  // context -> counts indexed by token id, plus the context total
  std::map<std::vector<std::int64_t>, std::vector<double>> counts_;
  std::map<std::vector<std::int64_t>, double> totals_;
};

NGramLM train_ngram_lm(const std::vector<std::vector<std::int64_t>>& transcripts,
                       std::size_t order, double add_k, std::size_t vocab_size);

// ---------------------------------------------------------------------------
// CTC prefix scoring

// Blank / non-blank forward variables of one prefix over all frames.
struct CtcPrefixState {
  std::vector<double> r_blank, r_label;  // log domain, one per frame
  std::int64_t last = -1;                // last label of the prefix
  double score = 0.0;                    // log p(prefix is a prefix of the output)
};

class CtcPrefixScorer {
 public:
  // `log_probs` is [T x V] row-major log-softmax output.
  CtcPrefixScorer(std::vector<double> log_probs, std::size_t T, std::size_t V,
                  std::int64_t blank = kBlank);

  CtcPrefixState initial() const;
  // State of prefix + token; token must be a non-blank label.
  CtcPrefixState extend(const CtcPrefixState& state, std::int64_t token) const;
  // log p(the collapsed output is exactly the prefix).
  double final_score(const CtcPrefixState& state) const;

  std::size_t frames() const { return T_; }

 private:
  std::vector<double> lp_;
  std::size_t T_, V_;
  std::int64_t blank_;
};

// log p(prefix + ext is a prefix of the collapsed output).
double ctc_prefix_score(std::span<const double> log_probs, std::size_t T, std::size_t V,
                        std::span<const std::int64_t> prefix, std::int64_t ext,
                        std::int64_t blank = kBlank);
// log p(the collapsed output equals `labels`).
double ctc_sequence_score(std::span<const double> log_probs, std::size_t T, std::size_t V,
                          std::span<const std::int64_t> labels, std::int64_t blank = kBlank);

// ---------------------------------------------------------------------------
// Beam search

// Next-token log-probabilities of the attention decoder.
class DecoderScorer {
 public:
  virtual ~DecoderScorer() = default;
  // `y_in` starts with kSos. Returns a vector of vocab_size() entries.
  virtual std::vector<double> next_log_probs(std::span<const std::int64_t> y_in) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

// Runs the model decoder on a fixed encoder memory.
class ModelDecoderScorer : public DecoderScorer {
 public:
  ModelDecoderScorer(AvRelModel& model, Tensor memory) : model_(model), memory_(std::move(memory)) {}
  std::vector<double> next_log_probs(std::span<const std::int64_t> y_in) const override;
  std::size_t vocab_size() const override { return model_.config().vocab_size; }

 private:
  AvRelModel& model_;
  Tensor memory_;
};

struct DecodeResult {
  Hypothesis best;
  bool reached_eos = true;  // false: best partial returned, treat as a warning
  std::size_t expansions = 0;
};

// Length-synchronous joint CTC/attention beam search with shallow LM fusion.
// `on_expand` sees every scored candidate.
DecodeResult beam_search(const DecoderScorer& decoder, const CtcPrefixScorer& ctc,
                         const NGramLM* lm, const DecodeConfig& cfg,
                         const std::function<void(const Hypothesis&)>& on_expand = {});

// ---------------------------------------------------------------------------
// Utterance-level decoding

struct DecodeRecord {
  std::string clip_id;
  std::vector<std::int64_t> hypothesis, reference;
  double combined = 0.0, score_att = 0.0, score_ctc = 0.0, score_lm = 0.0;
  bool reached_eos = true;
  std::vector<double> s_a_mean, s_v_mean;
};

// Eval-mode, gradient-free decode of one clip. The model is only read.
DecodeRecord decode_clip(AvRelModel& model, const VideoClip& video, const AudioClip& audio,
                         const NGramLM* lm, const DecodeConfig& cfg);

std::string decode_record_to_json(const DecodeRecord& r);
DecodeRecord decode_record_from_json(const std::string& line);

}  // namespace avrel
