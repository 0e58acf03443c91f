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

#include "avrel/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace avrel {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double read_score(const nlohmann::json& j) {
  if (j.is_null()) return kNegInf;
  return j.get<double>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void DecodeConfig::validate() const {
  if (beam_width < 1) throw ConfigError("beam_width", "beam_width must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "alpha must be in [0,1]");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta", "beta must be >= 0");
  if (max_len < 1) throw ConfigError("max_len", "max_len must be >= 1");
}

const std::set<std::string>& DecodeConfig::keys() {
  static const std::set<std::string> k{"beam_width", "alpha", "beta", "max_len",
                                       "normalize_by_length"};
  return k;
}

DecodeConfig DecodeConfig::from_kv(const KeyValueConfig& kv) {
  DecodeConfig c;
  const auto bw = kv.get_int("beam_width", static_cast<long long>(c.beam_width));
  if (bw < 1) throw ConfigError("beam_width", "beam_width must be >= 1");
  c.beam_width = static_cast<std::size_t>(bw);
  c.alpha = kv.get_double("alpha", c.alpha);
  c.beta = kv.get_double("beta", c.beta);
  const auto ml = kv.get_int("max_len", static_cast<long long>(c.max_len));
  if (ml < 1) throw ConfigError("max_len", "max_len must be >= 1");
  c.max_len = static_cast<std::size_t>(ml);
  c.normalize_by_length = kv.get_bool("normalize_by_length", c.normalize_by_length);
  c.validate();
  return c;
}

KeyValueConfig DecodeConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set("beam_width", std::to_string(beam_width));
  kv.set("alpha", format_double(alpha));
  kv.set("beta", format_double(beta));
  kv.set("max_len", std::to_string(max_len));
  kv.set("normalize_by_length", normalize_by_length ? "true" : "false");
  return kv;
}

std::vector<std::int64_t> Hypothesis::symbols() const {
  std::vector<std::int64_t> s = tokens;
  if (finished()) s.pop_back();
  return s;
}

double combine_scores(double att, double ctc, double lm, double alpha, double beta) {
  double c = 0.0;
  if (alpha != 0.0) c += alpha * att;
  if (alpha != 1.0) c += (1.0 - alpha) * ctc;
  if (beta != 0.0) c += beta * lm;
  return c;
}

// ---------------------------------------------------------------------------
// Language model

NGramLM::NGramLM(std::size_t order, double add_k, std::size_t vocab_size)
    : order_(order), add_k_(add_k), vocab_size_(vocab_size) {
  if (order < 1) throw ConfigError("lm_order", "lm_order must be >= 1");
  if (!(add_k > 0.0) || !std::isfinite(add_k)) throw ConfigError("lm_add_k", "lm_add_k must be > 0");
  if (vocab_size <= static_cast<std::size_t>(kFirstSymbol)) {
    throw ConfigError("vocab_size", "vocabulary holds no symbols");
  }
}

std::vector<std::int64_t> NGramLM::predicted_tokens() const {
  std::vector<std::int64_t> t{kEos};
  for (auto s = kFirstSymbol; s < static_cast<std::int64_t>(vocab_size_); ++s) t.push_back(s);
  return t;
}

std::vector<std::int64_t> NGramLM::context_of(std::span<const std::int64_t> history) const {
  const std::size_t n = order_ - 1;
  std::vector<std::int64_t> ctx(n, kSos);
  const std::size_t take = std::min(n, history.size());
  std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
            ctx.end() - static_cast<std::ptrdiff_t>(take));
  return ctx;
}

void NGramLM::add_sentence(std::span<const std::int64_t> symbols) {
  for (auto s : symbols) {
    if (s < kFirstSymbol || s >= static_cast<std::int64_t>(vocab_size_)) {
      throw Error("vocab", "lm: token " + std::to_string(s) + " is not a symbol");
    }
  }
  std::vector<std::int64_t> seq(symbols.begin(), symbols.end());
  seq.push_back(kEos);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto ctx = context_of(std::span<const std::int64_t>(seq.data(), i));
    auto& c = counts_[ctx];
    if (c.empty()) c.assign(vocab_size_, 0.0);
    c[static_cast<std::size_t>(seq[i])] += 1.0;
    totals_[ctx] += 1.0;
  }
}

double NGramLM::log_prob(std::span<const std::int64_t> history, std::int64_t token) const {
  if (token != kEos && (token < kFirstSymbol || token >= static_cast<std::int64_t>(vocab_size_))) {
    return kNegInf;
  }
  const double P = static_cast<double>(vocab_size_ - static_cast<std::size_t>(kFirstSymbol) + 1);
  const auto ctx = context_of(history);
  double c = 0.0, tot = 0.0;
  if (auto it = counts_.find(ctx); it != counts_.end()) {
    c = it->second[static_cast<std::size_t>(token)];
    tot = totals_.at(ctx);
  }
  return std::log((c + add_k_) / (tot + add_k_ * P));
}

std::string NGramLM::to_json() const {
  nlohmann::json j;
  j["order"] = order_;
  j["add_k"] = add_k_;
  j["vocab_size"] = vocab_size_;
  j["contexts"] = nlohmann::json::array();
  for (const auto& [ctx, c] : counts_) j["contexts"].push_back({{"context", ctx}, {"counts", c}});
  return j.dump();
}

NGramLM NGramLM::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NGramLM lm(j.at("order").get<std::size_t>(), j.at("add_k").get<double>(),
               j.at("vocab_size").get<std::size_t>());
    for (const auto& e : j.at("contexts")) {
      auto ctx = e.at("context").get<std::vector<std::int64_t>>();
      auto c = e.at("counts").get<std::vector<double>>();
      if (ctx.size() != lm.order_ - 1 || c.size() != lm.vocab_size_) {
        throw IoError("lm: context or count table has the wrong size");
      }
      double tot = 0.0;
      for (double x : c) tot += x;
      lm.totals_[ctx] = tot;
      lm.counts_[std::move(ctx)] = std::move(c);
    }
    return lm;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("lm: malformed JSON: ") + e.what());
  }
}

void NGramLM::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("lm: cannot write " + path);
  out << to_json() << '\n';
  if (!out) throw IoError("lm: write failed for " + path);
}

NGramLM NGramLM::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("lm: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

NGramLM train_ngram_lm(const std::vector<std::vector<std::int64_t>>& transcripts,
                       std::size_t order, double add_k, std::size_t vocab_size) {
  if (transcripts.empty()) throw Error("data", "lm: empty training corpus");
  NGramLM lm(order, add_k, vocab_size);
  for (const auto& t : transcripts) lm.add_sentence(t);
  return lm;
}

// ---------------------------------------------------------------------------
// CTC prefix scoring

CtcPrefixScorer::CtcPrefixScorer(std::vector<double> log_probs, std::size_t T, std::size_t V,
                                 std::int64_t blank)
    : lp_(std::move(log_probs)), T_(T), V_(V), blank_(blank) {
  if (T == 0 || lp_.size() != T * V) throw ShapeError("ctc prefix: log-prob table size mismatch");
  if (blank < 0 || static_cast<std::size_t>(blank) >= V) {
    throw Error("vocab", "ctc prefix: blank outside vocabulary");
  }
}

CtcPrefixState CtcPrefixScorer::initial() const {
  CtcPrefixState s;
  s.r_blank.resize(T_);
  s.r_label.assign(T_, kNegInf);
  double acc = 0.0;
  for (std::size_t t = 0; t < T_; ++t) {
    acc += lp_[t * V_ + static_cast<std::size_t>(blank_)];
    s.r_blank[t] = acc;
  }
  return s;
}

double CtcPrefixScorer::final_score(const CtcPrefixState& st) const {
  return lse(st.r_label[T_ - 1], st.r_blank[T_ - 1]);
}

CtcPrefixState CtcPrefixScorer::extend(const CtcPrefixState& st, std::int64_t c) const {
  if (c == blank_ || c < 0 || static_cast<std::size_t>(c) >= V_) {
    throw Error("vocab", "ctc prefix: extension " + std::to_string(c) + " is blank or out of range");
  }
  const auto k = static_cast<std::size_t>(c);
  const auto b = static_cast<std::size_t>(blank_);
  CtcPrefixState ns;
  ns.last = c;
  ns.r_label.assign(T_, kNegInf);
  ns.r_blank.assign(T_, kNegInf);
  if (st.last == -1) ns.r_label[0] = lp_[k];
  double psi = ns.r_label[0];
  for (std::size_t t = 1; t < T_; ++t) {
    const double phi = c == st.last ? st.r_blank[t - 1] : lse(st.r_blank[t - 1], st.r_label[t - 1]);
    const double emit = lp_[t * V_ + k];
    ns.r_label[t] = lse(ns.r_label[t - 1], phi) + emit;
    ns.r_blank[t] = lse(ns.r_blank[t - 1], ns.r_label[t - 1]) + lp_[t * V_ + b];
    psi = lse(psi, phi + emit);
  }
  ns.score = psi;
  return ns;
}

double ctc_prefix_score(std::span<const double> log_probs, std::size_t T, std::size_t V,
                        std::span<const std::int64_t> prefix, std::int64_t ext,
                        std::int64_t blank) {
  CtcPrefixScorer sc(std::vector<double>(log_probs.begin(), log_probs.end()), T, V, blank);
  auto st = sc.initial();
  for (auto p : prefix) st = sc.extend(st, p);
  return sc.extend(st, ext).score;
}

double ctc_sequence_score(std::span<const double> log_probs, std::size_t T, std::size_t V,
                          std::span<const std::int64_t> labels, std::int64_t blank) {
  CtcPrefixScorer sc(std::vector<double>(log_probs.begin(), log_probs.end()), T, V, blank);
  auto st = sc.initial();
  for (auto p : labels) st = sc.extend(st, p);
  return sc.final_score(st);
}

// ---------------------------------------------------------------------------
// Beam search

std::vector<double> ModelDecoderScorer::next_log_probs(std::span<const std::int64_t> y_in) const {
  NoGradGuard ng;
  const Tensor logits = model_.decode_forward(memory_, y_in);
  const std::size_t J = logits.dim(0), V = logits.dim(1);
  const double* row = logits.values().data() + (J - 1) * V;
  const double m = *std::max_element(row, row + V);
  double z = 0.0;
  for (std::size_t k = 0; k < V; ++k) z += std::exp(row[k] - m);
  const double l = m + std::log(z);
  std::vector<double> out(V);
  for (std::size_t k = 0; k < V; ++k) out[k] = row[k] - l;
  return out;
}

namespace {

struct Beam {
  Hypothesis h;
  CtcPrefixState ctc;
};

// Higher score first; ties go to the lexicographically smaller sequence.
bool ranks_before(double sa, const std::vector<std::int64_t>& ta, double sb,
                  const std::vector<std::int64_t>& tb) {
  if (sa != sb) return sa > sb;
  return ta < tb;
}

double final_score(const Hypothesis& h, bool normalize) {
  if (!normalize) return h.combined;
  return h.combined / static_cast<double>(std::max<std::size_t>(1, h.tokens.size()));
}

}  // namespace

DecodeResult beam_search(const DecoderScorer& decoder, const CtcPrefixScorer& ctc,
                         const NGramLM* lm, const DecodeConfig& cfg,
                         const std::function<void(const Hypothesis&)>& on_expand) {
  cfg.validate();
  const std::size_t V = decoder.vocab_size();
  std::vector<std::int64_t> candidates{kEos};
  for (auto s = kFirstSymbol; s < static_cast<std::int64_t>(V); ++s) candidates.push_back(s);

  DecodeResult res;
  std::vector<Beam> beams{{Hypothesis{}, ctc.initial()}};
  std::vector<Hypothesis> ended;
  std::vector<std::int64_t> y_in;

  for (std::size_t step = 0; step < cfg.max_len && !beams.empty(); ++step) {
    std::vector<Beam> next;
    next.reserve(beams.size() * candidates.size());
    for (const auto& b : beams) {
      y_in.assign(1, kSos);
      y_in.insert(y_in.end(), b.h.tokens.begin(), b.h.tokens.end());
      const auto att = decoder.next_log_probs(y_in);
      if (att.size() != V) throw ShapeError("beam_search: decoder returned the wrong vocab size");
      for (auto c : candidates) {
        Beam nb;
        nb.h.tokens = b.h.tokens;
        nb.h.tokens.push_back(c);
        nb.h.score_att = b.h.score_att + att[static_cast<std::size_t>(c)];
        if (c == kEos) {
          nb.h.score_ctc = ctc.final_score(b.ctc);
        } else {
          nb.ctc = ctc.extend(b.ctc, c);
          nb.h.score_ctc = nb.ctc.score;
        }
        nb.h.score_lm = lm ? b.h.score_lm + lm->log_prob(b.h.tokens, c) : 0.0;
        nb.h.combined =
            combine_scores(nb.h.score_att, nb.h.score_ctc, nb.h.score_lm, cfg.alpha, cfg.beta);
        ++res.expansions;
        if (on_expand) on_expand(nb.h);
        next.push_back(std::move(nb));
      }
    }
    std::sort(next.begin(), next.end(), [](const Beam& a, const Beam& b) {
      return ranks_before(a.h.combined, a.h.tokens, b.h.combined, b.h.tokens);
    });
    if (next.size() > cfg.beam_width) next.resize(cfg.beam_width);
    beams.clear();
    for (auto& nb : next) {
      if (nb.h.finished()) {
        ended.push_back(std::move(nb.h));
      } else {
        beams.push_back(std::move(nb));
      }
    }
  }

  const bool norm = cfg.normalize_by_length;
  auto pick = [norm](const Hypothesis& a, const Hypothesis& b) {
    return ranks_before(final_score(a, norm), a.tokens, final_score(b, norm), b.tokens);
  };
  if (!ended.empty()) {
    res.best = *std::min_element(ended.begin(), ended.end(), pick);
  } else {
    res.reached_eos = false;
    std::vector<Hypothesis> partial;
    for (auto& b : beams) partial.push_back(b.h);
    if (!partial.empty()) res.best = *std::min_element(partial.begin(), partial.end(), pick);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Utterance-level decoding

DecodeRecord decode_clip(AvRelModel& model, const VideoClip& video, const AudioClip& audio,
                         const NGramLM* lm, const DecodeConfig& cfg) {
  if (model.training()) throw Error("state", "decode_clip: model must be in eval mode");
  NoGradGuard ng;
  ReliabilityTrace trace;
  const Tensor memory = model.encode(video, audio, &trace);
  const Tensor logits = model.ctc_head(memory);
  const std::size_t T = logits.dim(0), V = logits.dim(1);
  std::vector<double> lp(T * V);
  for (std::size_t t = 0; t < T; ++t) {
    const double* r = logits.values().data() + t * V;
    const double m = *std::max_element(r, r + V);
    double z = 0.0;
    for (std::size_t k = 0; k < V; ++k) z += std::exp(r[k] - m);
    const double l = m + std::log(z);
    for (std::size_t k = 0; k < V; ++k) lp[t * V + k] = r[k] - l;
  }
  CtcPrefixScorer ctc(std::move(lp), T, V);
  ModelDecoderScorer dec(model, memory);
  const auto res = beam_search(dec, ctc, lm, cfg);
  DecodeRecord r;
  r.hypothesis = res.best.symbols();
  r.combined = res.best.combined;
  r.score_att = res.best.score_att;
  r.score_ctc = res.best.score_ctc;
  r.score_lm = res.best.score_lm;
  r.reached_eos = res.reached_eos;
  r.s_a_mean = trace.s_a_mean;
  r.s_v_mean = trace.s_v_mean;
  return r;
}

std::string decode_record_to_json(const DecodeRecord& r) {
  nlohmann::json j;
  j["clip_id"] = r.clip_id;
  j["hypothesis"] = r.hypothesis;
  j["reference"] = r.reference;
  j["combined"] = finite_or_null(r.combined);
  j["score_att"] = finite_or_null(r.score_att);
  j["score_ctc"] = finite_or_null(r.score_ctc);
  j["score_lm"] = finite_or_null(r.score_lm);
  j["reached_eos"] = r.reached_eos;
  j["s_a_mean"] = r.s_a_mean;
  j["s_v_mean"] = r.s_v_mean;
  return j.dump();
}

DecodeRecord decode_record_from_json(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    DecodeRecord r;
    r.clip_id = j.at("clip_id").get<std::string>();
    r.hypothesis = j.at("hypothesis").get<std::vector<std::int64_t>>();
    r.reference = j.at("reference").get<std::vector<std::int64_t>>();
    r.combined = read_score(j.at("combined"));
    r.score_att = read_score(j.at("score_att"));
    r.score_ctc = read_score(j.at("score_ctc"));
    r.score_lm = read_score(j.at("score_lm"));
    r.reached_eos = j.at("reached_eos").get<bool>();
    r.s_a_mean = j.at("s_a_mean").get<std::vector<double>>();
    r.s_v_mean = j.at("s_v_mean").get<std::vector<double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("decode record: malformed JSON line: ") + e.what());
  }
}

}  // namespace avrel
