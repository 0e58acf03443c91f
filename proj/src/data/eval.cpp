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
#include <map>
#include <sstream>

#include "avrel/data.hpp"
#include "avrel/parallel.hpp"

namespace avrel {

// ---------------------------------------------------------------------------
// Scoring

EditCounts edit_counts(const std::vector<std::int64_t>& ref, const std::vector<std::int64_t>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      c.substitutions += ref[i - 1] != hyp[j - 1];
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

double wer(const std::vector<std::int64_t>& ref, const std::vector<std::int64_t>& hyp) {
  if (ref.empty()) throw Error("data", "wer: empty reference");
  const auto c = edit_counts(ref, hyp);
  return 100.0 * static_cast<double>(c.errors()) / static_cast<double>(ref.size());
}

// ---------------------------------------------------------------------------
// Conditions

std::string visual_condition_name(VisualCondition v) {
  switch (v) {
    case VisualCondition::kClean: return "clean";
    case VisualCondition::kOcclusion: return "occlusion";
    case VisualCondition::kNoise: return "noise";
    case VisualCondition::kBoth: return "both";
  }
  return "clean";
}

VisualCondition parse_visual_condition(const std::string& s) {
  if (s == "clean") return VisualCondition::kClean;
  if (s == "occlusion") return VisualCondition::kOcclusion;
  if (s == "noise") return VisualCondition::kNoise;
  if (s == "both") return VisualCondition::kBoth;
  throw ConfigError("visual_corruption", "visual corruption must be occlusion, noise, both or clean, got '" + s + "'");
}

namespace {

std::string snr_label(const std::optional<double>& snr) {
  if (!snr) return "clean";
  return format_double(*snr);
}

const std::vector<std::optional<double>>& table_snrs() {
  static const std::vector<std::optional<double>> s{std::nullopt, 15.0, 10.0, 5.0, 0.0, -5.0};
  return s;
}

}  // namespace

std::string EvalCondition::name() const { return visual_condition_name(visual) + "/" + snr_label(snr_db); }

std::vector<EvalCondition> table_conditions() {
  std::vector<EvalCondition> out;
  for (auto v : {VisualCondition::kClean, VisualCondition::kOcclusion, VisualCondition::kNoise,
                 VisualCondition::kBoth}) {
    for (const auto& s : table_snrs()) out.push_back({v, s});
  }
  return out;
}

std::pair<VideoClip, AudioClip> corrupt_for_condition(const Example& ex, const EvalCondition& c,
                                                      const std::vector<OcclusionPatch>& patches,
                                                      const std::vector<std::vector<double>>& babble,
                                                      std::uint64_t seed, CorruptionPlan* plan_out) {
  const std::uint64_t pseed = eval_plan_seed(seed, c.name(), ex.clip_id);
  const bool occ = c.visual == VisualCondition::kOcclusion || c.visual == VisualCondition::kBoth;
  const bool noise = c.visual == VisualCondition::kNoise || c.visual == VisualCondition::kBoth;
  CorruptionConfig cc;
  cc.p_occlusion = occ ? 1.0 : 0.0;
  cc.p_blur = noise ? 1.0 : 0.0;
  cc.p_noise = noise ? 1.0 : 0.0;
  cc.p_audio = c.snr_db ? 1.0 : 0.0;
  if (c.snr_db) cc.snr_set = {*c.snr_db};
  cc.patch_bank_size = patches.size();
  cc.noise_bank_size = std::max<std::size_t>(1, babble.size());
  CorruptionPlan plan = plan_corruption(pseed, ex.video.frames_count, ex.audio.samples.size(), cc);
  auto [v, a] = corrupt_pair(ex.video, ex.audio, plan, patches, babble);
  if (plan_out) *plan_out = plan;
  return {v, a};
}

// ---------------------------------------------------------------------------
// Grid

EvalReport evaluate_condition(const GridModel& m, const std::vector<Example>& test,
                              const EvalCondition& c, const GridResources& res) {
  if (!m.model) throw Error("checkpoint", "evaluate: model '" + m.name + "' is not loaded");
  if (test.empty()) throw Error("data", "evaluate: empty test set");
  m.model->set_training(false);
  EvalReport rep;
  rep.model = m.name;
  rep.condition = c;
  rep.rows.resize(test.size());
  parallel_for(test.size(), res.workers, [&](std::size_t i) {
    const Example& ex = test[i];
    auto [v, a] = corrupt_for_condition(ex, c, res.patches, res.babble, res.seed);
    ClipResult& row = rep.rows[i];
    row.clip_id = ex.clip_id;
    row.reference = ex.tokens;
    row.record = decode_clip(*m.model, v, a, res.lm, res.decode);
    row.record.clip_id = ex.clip_id;
    row.record.reference = ex.tokens;
    row.hypothesis = row.record.hypothesis;
    row.edits = edit_counts(row.reference, row.hypothesis);
  });
  std::sort(rep.rows.begin(), rep.rows.end(),
            [](const ClipResult& a, const ClipResult& b) { return a.clip_id < b.clip_id; });
  std::size_t errors = 0, words = 0;
  for (const auto& r : rep.rows) {
    if (r.reference.empty()) throw Error("data", "evaluate: empty reference for " + r.clip_id);
    errors += r.edits.errors();
    words += r.reference.size();
  }
  rep.n_utts = rep.rows.size();
  rep.wer = 100.0 * static_cast<double>(errors) / static_cast<double>(words);
  return rep;
}

std::vector<EvalReport> run_grid(const std::vector<GridModel>& models,
                                 const std::vector<Example>& test,
                                 const std::vector<EvalCondition>& conditions,
                                 const GridResources& res) {
  std::vector<EvalReport> out;
  for (const auto& m : models) {
    for (const auto& c : conditions) out.push_back(evaluate_condition(m, test, c, res));
  }
  return out;
}

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string grid_table_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "model,visual";
  for (const auto& s : table_snrs()) os << ',' << snr_label(s);
  os << '\n';
  std::vector<std::string> models;
  for (const auto& r : reports) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  for (const auto& m : models) {
    for (auto v : {VisualCondition::kClean, VisualCondition::kOcclusion, VisualCondition::kNoise,
                   VisualCondition::kBoth}) {
      std::vector<std::string> cells;
      bool any = false;
      for (const auto& s : table_snrs()) {
        const EvalCondition c{v, s};
        std::string cell;
        for (const auto& r : reports) {
          if (r.model == m && r.condition.name() == c.name()) {
            cell = fixed4(r.wer);
            any = true;
          }
        }
        cells.push_back(cell);
      }
      if (!any) continue;
      os << m << ',' << visual_condition_name(v);
      for (const auto& cell : cells) os << ',' << cell;
      os << '\n';
    }
  }
  return os.str();
}

std::string grid_long_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "model,condition,visual,snr,wer,n_utts,errors,ref_words\n";
  for (const auto& r : reports) {
    std::size_t errors = 0, words = 0;
    for (const auto& row : r.rows) {
      errors += row.edits.errors();
      words += row.reference.size();
    }
    os << r.model << ',' << r.condition.name() << ',' << visual_condition_name(r.condition.visual)
       << ',' << snr_label(r.condition.snr_db) << ',' << fixed4(r.wer) << ',' << r.n_utts << ','
       << errors << ',' << words << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Reliability traces

std::vector<ReliabilityRow> export_reliability(AvRelModel& model, const std::vector<Example>& clips,
                                               const std::vector<CorruptionPlan>& plans,
                                               const std::vector<OcclusionPatch>& patches,
                                               const std::vector<std::vector<double>>& babble,
                                               std::size_t workers) {
  if (clips.size() != plans.size()) {
    throw Error("data", "export_reliability: " + std::to_string(clips.size()) + " clips but " +
                            std::to_string(plans.size()) + " plans");
  }
  if (!model.config().has_scoring()) {
    throw Error("variant", "export_reliability: model variant '" +
                               variant_name(model.config().variant) + "' has no reliability scorer");
  }
  model.set_training(false);
  std::vector<std::vector<ReliabilityRow>> per(clips.size());
  parallel_for(clips.size(), workers, [&](std::size_t i) {
    const Example& ex = clips[i];
    const CorruptionPlan& plan = plans[i];
    auto [v, a] = corrupt_pair(ex.video, ex.audio, plan, patches, babble);
    NoGradGuard ng;
    ReliabilityTrace trace;
    model.encode(v, a, &trace);
    const std::size_t T = v.frames_count;
    const std::size_t spf = a.samples.size() / T;
    for (std::size_t t = 0; t < T; ++t) {
      ReliabilityRow r;
      r.clip_id = ex.clip_id;
      r.frame = t;
      r.s_a_mean = trace.s_a_mean[t];
      r.s_v_mean = trace.s_v_mean[t];
      r.audio_corrupted = plan.audio_corrupted(t * spf, (t + 1) * spf);
      r.visual_corrupted = plan.visual_corrupted(t);
      per[i].push_back(r);
    }
  });
  std::vector<ReliabilityRow> rows;
  for (auto& p : per) rows.insert(rows.end(), p.begin(), p.end());
  std::stable_sort(rows.begin(), rows.end(), [](const ReliabilityRow& a, const ReliabilityRow& b) {
    return a.clip_id != b.clip_id ? a.clip_id < b.clip_id : a.frame < b.frame;
  });
  return rows;
}

std::string reliability_csv(const std::vector<ReliabilityRow>& rows) {
  std::ostringstream os;
  os << "clip_id,frame,s_a_mean,s_v_mean,audio_corrupted,visual_corrupted\n";
  for (const auto& r : rows) {
    os << r.clip_id << ',' << r.frame << ',' << format_double(r.s_a_mean) << ','
       << format_double(r.s_v_mean) << ',' << (r.audio_corrupted ? 1 : 0) << ','
       << (r.visual_corrupted ? 1 : 0) << '\n';
  }
  return os.str();
}

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300, kEps = 1e-15;
  double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const double md = m;
    double aa = md * (b - md) * x / ((a + 2 * md - 1) * (a + 2 * md));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + md) * (a + b + md) * x / ((a + 2 * md) * (a + 2 * md + 1));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double regularized_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                     b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(lbt) * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(lbt) * beta_cf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw ConfigError("dof", "degrees of freedom must be positive");
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * regularized_beta(0.5 * dof, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

PairedTest reliability_paired_test(const std::vector<ReliabilityRow>& rows, Modality m) {
  struct Acc {
    double sc = 0, sk = 0;
    std::size_t nc = 0, nk = 0;
  };
  std::map<std::string, Acc> per;
  for (const auto& r : rows) {
    const bool bad = m == Modality::kVisual ? r.visual_corrupted : r.audio_corrupted;
    const double s = m == Modality::kVisual ? r.s_v_mean : r.s_a_mean;
    auto& a = per[r.clip_id];
    if (bad) {
      a.sc += s;
      ++a.nc;
    } else {
      a.sk += s;
      ++a.nk;
    }
  }
  std::vector<double> diffs;
  for (const auto& [id, a] : per) {
    if (a.nc && a.nk) diffs.push_back(a.sc / static_cast<double>(a.nc) - a.sk / static_cast<double>(a.nk));
  }
  PairedTest out;
  out.n = diffs.size();
  if (diffs.empty()) return out;
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  out.mean_diff = mean;
  if (diffs.size() < 2) return out;
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= static_cast<double>(diffs.size() - 1);
  const double se = std::sqrt(var / static_cast<double>(diffs.size()));
  if (se == 0.0) {
    out.t = mean < 0 ? -INFINITY : (mean > 0 ? INFINITY : 0.0);
    out.p_one_sided = mean < 0 ? 0.0 : 1.0;
    return out;
  }
  out.t = mean / se;
  out.p_one_sided = student_t_cdf(out.t, static_cast<double>(diffs.size() - 1));
  return out;
}

}  // namespace avrel
