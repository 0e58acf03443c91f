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

#include "avrel/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "avrel/data.hpp"
#include "avrel/gradcheck.hpp"
#include "avrel/parallel.hpp"
#include "json.hpp"

namespace avrel {

namespace {

namespace fs = std::filesystem;

constexpr std::size_t kBabbleVoices = 3;
constexpr std::size_t kBabbleLength = 8000;
constexpr double kGradTolerance = 1e-4;
constexpr std::uint64_t kTrainResources = 0x7472;
constexpr std::uint64_t kEvalResources = 0x6576;

const std::set<std::string>& section_keys(const std::string& section) {
  static const std::set<std::string> none;
  static const std::set<std::string> gen{"n_train", "n_test"};
  static const std::set<std::string> lm{"order", "add_k"};
  static const std::set<std::string> eval{"visual", "snr"};
  if (section == "data") return SyntheticSpec::keys();
  if (section == "gen") return gen;
  if (section == "corruption") return CorruptionConfig::keys();
  if (section == "model") return ModelConfig::keys();
  if (section == "train") return TrainConfig::keys();
  if (section == "decode") return DecodeConfig::keys();
  if (section == "lm") return lm;
  if (section == "eval") return eval;
  return none;
}

// Config keys are "seed", "workers" or "<section>.<key>".
void validate_keys(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.entries()) {
    if (key == "seed" || key == "workers") continue;
    const auto dot = key.find('.');
    if (dot == std::string::npos || !section_keys(key.substr(0, dot)).count(key.substr(dot + 1))) {
      throw ConfigError(key, "unknown config key '" + key + "'");
    }
  }
}

KeyValueConfig section(const KeyValueConfig& kv, const std::string& name) {
  KeyValueConfig out;
  const std::string prefix = name + ".";
  for (const auto& [key, value] : kv.entries()) {
    if (key.rfind(prefix, 0) == 0) out.set(key.substr(prefix.size()), value);
  }
  return out;
}

// Re-raises a section-level ConfigError under the fully qualified key.
template <class F>
auto in_section(const std::string& name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(name + "." + e.key, e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

struct Run {
  std::string subcommand;
  KeyValueConfig cfg;  // effective config: file overlaid with flags
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  fs::path out;
  std::map<std::string, std::string> inputs;

  // Result-affecting configuration; the worker count is excluded because
  // outputs do not depend on it.
  KeyValueConfig hashed() const {
    KeyValueConfig kv;
    for (const auto& [k, v] : cfg.entries()) {
      if (k != "workers") kv.set(k, v);
    }
    return kv;
  }

  // Every artifact gets a "<file>.meta.json" sidecar.
  void meta(const fs::path& artifact) const {
    const auto kv = hashed();
    nlohmann::json j;
    j["artifact"] = artifact.filename().string();
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config_hash"] = hex64(kv.hash());
    j["tool_version"] = std::string(kToolVersion);
    j["config"] = kv.entries();
    j["inputs"] = inputs;
    write_text(artifact.string() + ".meta.json", j.dump(2) + "\n");
  }

  void artifact(const fs::path& path, const std::string& text) const {
    write_text(path, text);
    meta(path);
  }
};

SyntheticSpec spec_for_manifest(const std::string& manifest) {
  const auto path = fs::path(manifest).parent_path() / "spec.kv";
  if (!fs::exists(path)) throw IoError("dataset spec not found: " + path.string());
  return in_section("data", [&] { return SyntheticSpec::from_kv(KeyValueConfig::load(path.string())); });
}

std::vector<Example> load_clips(Run& run, const std::string& manifest) {
  run.inputs["manifest"] = manifest;
  return load_dataset(manifest, run.workers);
}

CorruptionConfig corruption_config(const Run& run) {
  return in_section("corruption", [&] { return CorruptionConfig::from_kv(section(run.cfg, "corruption")); });
}

std::vector<OcclusionPatch> patch_bank(const Run& run, const CorruptionConfig& c, std::uint64_t tag) {
  return make_patch_bank(c.patch_bank_size, derive_seed(run.seed, tag, 0));
}

std::vector<std::vector<double>> babble_bank(const Run& run, const SyntheticSpec& spec,
                                             const CorruptionConfig& c, std::uint64_t tag) {
  return make_babble_bank(spec, c.noise_bank_size, kBabbleVoices, derive_seed(run.seed, tag, 1),
                          kBabbleLength);
}

std::optional<EvalCondition> condition_from(const Run& run) {
  const bool has_v = run.cfg.has("eval.visual"), has_s = run.cfg.has("eval.snr");
  if (!has_v && !has_s) return std::nullopt;
  EvalCondition c;
  c.visual = in_section("eval", [&] {
    try {
      return parse_visual_condition(run.cfg.get_string("eval.visual", "clean"));
    } catch (const ConfigError& e) {
      throw ConfigError("visual", e.what());
    }
  });
  const auto snr = run.cfg.get_string("eval.snr", "clean");
  if (snr != "clean") c.snr_db = run.cfg.get_double("eval.snr", 0.0);
  return c;
}

ModelConfig model_config_for(const Run& run, const SyntheticSpec& spec) {
  auto kv = section(run.cfg, "model");
  auto fill = [&](const char* key, std::size_t v) {
    if (!kv.has(key)) kv.set(key, std::to_string(v));
  };
  fill("vocab_size", spec.model_vocab_size());
  fill("image_h", spec.image_h);
  fill("image_w", spec.image_w);
  auto mc = in_section("model", [&] { return ModelConfig::from_kv(kv); });
  if (mc.vocab_size != spec.model_vocab_size()) {
    throw ConfigError("model.vocab_size", "model.vocab_size must be " +
                                              std::to_string(spec.model_vocab_size()) +
                                              " for this dataset");
  }
  if (mc.image_h != spec.image_h || mc.image_w != spec.image_w) {
    throw ConfigError("model.image_h", "model image size does not match the dataset");
  }
  if (mc.samples_per_frame() != spec.samples_per_frame()) {
    throw ConfigError("model.audio_strides", "audio strides must multiply to " +
                                                 std::to_string(spec.samples_per_frame()) +
                                                 " samples per frame");
  }
  return mc;
}

fs::path model_config_path(const fs::path& checkpoint) {
  return fs::path(checkpoint).replace_extension(".kv");
}

void save_model(const Run& run, const AvRelModel& model, const fs::path& path) {
  save_checkpoint(path.string(), model.params().named_tensors());
  run.meta(path);
  run.artifact(model_config_path(path), model.config().to_kv().dump());
}

std::unique_ptr<AvRelModel> load_model(const std::string& checkpoint) {
  if (!fs::exists(checkpoint)) throw Error("checkpoint", "missing checkpoint " + checkpoint);
  const auto kv = KeyValueConfig::load(model_config_path(checkpoint).string());
  const auto mc = in_section("model", [&] { return ModelConfig::from_kv(kv); });
  auto model = std::make_unique<AvRelModel>(mc, 0);
  model->params().load(load_checkpoint(checkpoint));
  model->set_training(false);
  return model;
}

GridResources eval_resources(Run& run, const SyntheticSpec& spec, const NGramLM* lm) {
  GridResources res;
  const auto c = corruption_config(run);
  res.patches = patch_bank(run, c, kEvalResources);
  res.babble = babble_bank(run, spec, c, kEvalResources);
  res.lm = lm;
  res.decode = in_section("decode", [&] { return DecodeConfig::from_kv(section(run.cfg, "decode")); });
  res.seed = run.seed;
  res.workers = run.workers;
  return res;
}

std::optional<NGramLM> maybe_lm(Run& run, const std::string& path) {
  if (path.empty()) return std::nullopt;
  run.inputs["lm"] = path;
  return NGramLM::load(path);
}

// Parses every section once so that a bad value fails before any work.
void validate_sections(const Run& run) {
  in_section("data", [&] { return SyntheticSpec::from_kv(section(run.cfg, "data")); });
  corruption_config(run);
  in_section("model", [&] { return ModelConfig::from_kv(section(run.cfg, "model")); });
  in_section("train", [&] { return TrainConfig::from_kv(section(run.cfg, "train")); });
  in_section("decode", [&] { return DecodeConfig::from_kv(section(run.cfg, "decode")); });
  condition_from(run);
}

// ---- subcommands ----

struct Paths {
  std::string manifest, checkpoint, lm, plans, init_audio, init_visual;
  std::vector<std::string> checkpoints;
};

std::string cmd_gen_data(Run& run) {
  auto dkv = section(run.cfg, "data");
  if (!dkv.has("data_seed")) dkv.set("data_seed", std::to_string(run.seed));
  const auto spec = in_section("data", [&] { return SyntheticSpec::from_kv(dkv); });
  const auto gen = section(run.cfg, "gen");
  const long long n_train = gen.get_int("n_train", 600), n_test = gen.get_int("n_test", 100);
  if (n_train < 1) throw ConfigError("gen.n_train", "gen.n_train must be >= 1");
  if (n_test < 1) throw ConfigError("gen.n_test", "gen.n_test must be >= 1");
  run.artifact(run.out / "spec.kv", spec.to_kv().dump());
  std::size_t frames_min = SIZE_MAX, frames_max = 0;
  for (const auto& [split, n] : {std::pair<std::string, long long>{"train", n_train}, {"test", n_test}}) {
    const auto examples = make_examples(spec, split, static_cast<std::size_t>(n), run.workers);
    for (const auto& e : examples) {
      frames_min = std::min(frames_min, e.video.frames_count);
      frames_max = std::max(frames_max, e.video.frames_count);
    }
    write_dataset(examples, run.out.string(), split);
    run.meta(run.out / (split + ".jsonl"));
  }
  return "gen-data: " + std::to_string(n_train) + " train + " + std::to_string(n_test) +
         " test clips, vocab " + std::to_string(spec.vocab_size) + ", T " +
         std::to_string(frames_min) + ".." + std::to_string(frames_max) + " -> " + run.out.string();
}

std::string cmd_corrupt(Run& run, const Paths& p) {
  const auto spec = spec_for_manifest(p.manifest);
  const auto clips = load_clips(run, p.manifest);
  const auto ccfg = corruption_config(run);
  const auto cond = condition_from(run);
  const auto patches = patch_bank(run, ccfg, kEvalResources);
  const auto babble = babble_bank(run, spec, ccfg, kEvalResources);
  std::vector<Example> corrupted(clips.size());
  std::vector<CorruptionPlan> plans(clips.size());
  parallel_for(clips.size(), run.workers, [&](std::size_t i) {
    const auto& ex = clips[i];
    corrupted[i] = ex;
    if (cond) {
      std::tie(corrupted[i].video, corrupted[i].audio) =
          corrupt_for_condition(ex, *cond, patches, babble, run.seed, &plans[i]);
    } else {
      plans[i] = plan_corruption(eval_plan_seed(run.seed, "scheduler", ex.clip_id),
                                 ex.video.frames_count, ex.audio.samples.size(), ccfg);
      std::tie(corrupted[i].video, corrupted[i].audio) =
          corrupt_pair(ex.video, ex.audio, plans[i], patches, babble);
    }
  });
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return clips[a].clip_id < clips[b].clip_id; });
  std::string lines;
  std::size_t n_visual = 0, n_audio = 0;
  for (auto i : order) {
    lines += plan_to_json(clips[i].clip_id, plans[i]) + "\n";
    const auto& pl = plans[i];
    n_visual += !(pl.occlusion.empty() && pl.blur.empty() && pl.pixel_noise.empty());
    n_audio += !pl.audio.empty();
  }
  run.artifact(run.out / "plans.jsonl", lines);
  write_dataset(corrupted, run.out.string(), "corrupted");
  run.meta(run.out / "corrupted.jsonl");
  const std::string cname = cond ? cond->name() : "scheduler";
  return "corrupt: " + std::to_string(clips.size()) + " clips, condition " + cname + ", " +
         std::to_string(n_visual) + " visually and " + std::to_string(n_audio) +
         " acoustically corrupted -> " + (run.out / "plans.jsonl").string();
}

std::string cmd_train(Run& run, const Paths& p, std::ostream& log) {
  const auto spec = spec_for_manifest(p.manifest);
  const auto data = load_clips(run, p.manifest);
  const auto mc = model_config_for(run, spec);
  auto tkv = section(run.cfg, "train");
  if (!tkv.has("seed")) tkv.set("seed", std::to_string(run.seed));
  const auto tc = in_section("train", [&] { return TrainConfig::from_kv(tkv); });
  CorruptionResources cr;
  cr.config = corruption_config(run);
  cr.patches = patch_bank(run, cr.config, kTrainResources);
  cr.babble = babble_bank(run, spec, cr.config, kTrainResources);

  AvRelModel model(mc, tc.seed);
  auto init = [&](const std::string& path, const char* prefix, const char* tag) {
    if (path.empty()) return;
    run.inputs[tag] = path;
    const auto src = load_model(path);
    transfer_parameters(model, *src, prefix, prefix);
  };
  init(p.init_audio, "frontend.a.", "init_audio");
  init(p.init_visual, "frontend.v.", "init_visual");

  TrainHooks hooks;
  std::size_t stage_steps = 0;
  double stage_loss = 0.0;
  hooks.on_step = [&](const StepMetrics& m) {
    ++stage_steps;
    stage_loss += m.l_joint;
  };
  std::string stages_csv = "stage,max_frames,epochs,steps,mean_l_joint\n";
  hooks.on_stage_end = [&](std::size_t si) {
    const auto& st = tc.stages[si];
    const double mean = stage_steps ? stage_loss / static_cast<double>(stage_steps) : 0.0;
    stages_csv += std::to_string(si + 1) + "," + std::to_string(st.max_frames) + "," +
                  std::to_string(st.epochs) + "," + std::to_string(stage_steps) + "," +
                  format_double(mean) + "\n";
    log << "stage " << si + 1 << "/" << tc.stages.size() << ": max_frames " << st.max_frames
        << ", epochs " << st.epochs << ", steps " << stage_steps << ", mean l_joint "
        << fmt("%.4f", mean) << "\n";
    save_model(run, model, run.out / ("model.stage" + std::to_string(si + 1) + ".avrt"));
    stage_steps = 0;
    stage_loss = 0.0;
  };
  const auto metrics = train(model, data, tc, tc.corrupt ? &cr : nullptr, hooks);

  std::string csv = metrics_csv_header() + "\n";
  for (const auto& m : metrics) csv += metrics_csv_row(m) + "\n";
  run.artifact(run.out / "metrics.csv", csv);
  run.artifact(run.out / "stages.csv", stages_csv);
  run.artifact(run.out / "train.kv", tc.to_kv().dump());
  save_model(run, model, run.out / "model.avrt");
  const double last = metrics.empty() ? 0.0 : metrics.back().l_joint;
  return "train: " + variant_name(mc.variant) + ", " + std::to_string(tc.stages.size()) +
         " stages, " + std::to_string(metrics.size()) + " steps, final l_joint " +
         fmt("%.4f", last) + " -> " + (run.out / "model.avrt").string();
}

std::string cmd_decode(Run& run, const Paths& p) {
  const auto spec = spec_for_manifest(p.manifest);
  const auto test = load_clips(run, p.manifest);
  run.inputs["checkpoint"] = p.checkpoint;
  auto model = load_model(p.checkpoint);
  const auto lm = maybe_lm(run, p.lm);
  const auto res = eval_resources(run, spec, lm ? &*lm : nullptr);
  const auto cond = condition_from(run).value_or(EvalCondition{});
  const auto rep = evaluate_condition({fs::path(p.checkpoint).stem().string(), model.get()}, test, cond, res);
  std::string lines;
  std::size_t partial = 0;
  for (const auto& r : rep.rows) {
    lines += decode_record_to_json(r.record) + "\n";
    partial += !r.record.reached_eos;
  }
  run.artifact(run.out / "decode.jsonl", lines);
  std::string s = "decode: " + std::to_string(rep.n_utts) + " clips, condition " + cond.name() +
                  ", WER " + fmt("%.2f", rep.wer) + "%";
  if (partial) s += ", " + std::to_string(partial) + " without eos";
  return s + " -> " + (run.out / "decode.jsonl").string();
}

std::string cmd_eval_grid(Run& run, const Paths& p) {
  const auto spec = spec_for_manifest(p.manifest);
  const auto test = load_clips(run, p.manifest);
  std::vector<std::unique_ptr<AvRelModel>> owned;
  std::vector<GridModel> models;
  std::set<std::string> names;
  for (std::size_t i = 0; i < p.checkpoints.size(); ++i) {
    const auto& ck = p.checkpoints[i];
    run.inputs["checkpoint" + std::to_string(i)] = ck;
    owned.push_back(load_model(ck));
    auto name = fs::path(ck).stem().string();
    if (name == "model") name = fs::path(ck).parent_path().filename().string();
    if (!names.insert(name).second) throw Error("checkpoint", "duplicate model name '" + name + "'");
    models.push_back({name, owned.back().get()});
  }
  const auto lm = maybe_lm(run, p.lm);
  const auto res = eval_resources(run, spec, lm ? &*lm : nullptr);
  std::vector<EvalCondition> conds;
  const auto only = condition_from(run);
  for (const auto& c : table_conditions()) {
    if (only && run.cfg.has("eval.visual") && c.visual != only->visual) continue;
    if (only && run.cfg.has("eval.snr") && c.snr_db != only->snr_db) continue;
    conds.push_back(c);
  }
  const auto reports = run_grid(models, test, conds, res);
  run.artifact(run.out / "grid.csv", grid_table_csv(reports));
  run.artifact(run.out / "grid_long.csv", grid_long_csv(reports));
  return "eval-grid: " + std::to_string(models.size()) + " models x " + std::to_string(conds.size()) +
         " conditions on " + std::to_string(test.size()) + " clips -> " +
         (run.out / "grid.csv").string();
}

nlohmann::json paired_json(const PairedTest& t) {
  return {{"n", t.n}, {"mean_diff", t.mean_diff}, {"t", t.t}, {"p_one_sided", t.p_one_sided}};
}

std::string cmd_export_rel(Run& run, const Paths& p) {
  const auto spec = spec_for_manifest(p.manifest);
  const auto clips = load_clips(run, p.manifest);
  run.inputs["checkpoint"] = p.checkpoint;
  run.inputs["plans"] = p.plans;
  auto model = load_model(p.checkpoint);
  std::map<std::string, CorruptionPlan> by_id;
  {
    std::ifstream f(p.plans, std::ios::binary);
    if (!f) throw IoError("cannot read plans " + p.plans);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto [id, plan] = plan_from_json(line);
      by_id[id] = std::move(plan);
    }
  }
  std::vector<CorruptionPlan> plans;
  for (const auto& ex : clips) {
    auto it = by_id.find(ex.clip_id);
    if (it == by_id.end()) throw Error("data", "no corruption plan for clip " + ex.clip_id);
    plans.push_back(it->second);
  }
  const auto res = eval_resources(run, spec, nullptr);
  const auto rows = export_reliability(*model, clips, plans, res.patches, res.babble, run.workers);
  run.artifact(run.out / "reliability.csv", reliability_csv(rows));
  const auto tv = reliability_paired_test(rows, Modality::kVisual);
  const auto ta = reliability_paired_test(rows, Modality::kAudio);
  nlohmann::json j{{"visual", paired_json(tv)}, {"audio", paired_json(ta)}};
  run.artifact(run.out / "reliability_test.json", j.dump(2) + "\n");
  return "export-rel: " + std::to_string(rows.size()) + " frames over " + std::to_string(clips.size()) +
         " clips, s_v corrupted-clean " + fmt("%+.4f", tv.mean_diff) + " (p " + fmt("%.2g", tv.p_one_sided) +
         "), s_a corrupted-clean " + fmt("%+.4f", ta.mean_diff) + " (p " + fmt("%.2g", ta.p_one_sided) +
         ") -> " + (run.out / "reliability.csv").string();
}

std::string cmd_gradcheck(Run& run, bool& failed) {
  auto results = catalog_gradchecks(run.seed);
  for (auto v : {ModelVariant::kRelScore, ModelVariant::kConcat, ModelVariant::kLinear,
                 ModelVariant::kAudioOnly, ModelVariant::kVisualOnly}) {
    results.push_back({"model_loss/" + variant_name(v), model_loss_gradcheck(run.seed, v)});
  }
  std::string csv = "name,max_rel_error,differentiable\n";
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  for (const auto& r : results) {
    csv += r.name + "," + fmt("%.6e", r.max_rel_error) + "," + (r.differentiable ? "1" : "0") + "\n";
    if (!r.differentiable) continue;
    ++checked;
    if (!(r.max_rel_error < worst)) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
  }
  run.artifact(run.out / "gradcheck.csv", csv);
  failed = !(worst < kGradTolerance);
  return "gradcheck: " + std::to_string(checked) + " checks, max relative error " + fmt("%.3e", worst) +
         " (" + worst_name + "), tolerance " + fmt("%.0e", kGradTolerance) + " " +
         (failed ? "FAIL" : "PASS");
}

std::string cmd_lm_train(Run& run, const Paths& p) {
  const auto spec = spec_for_manifest(p.manifest);
  run.inputs["manifest"] = p.manifest;
  std::vector<std::vector<std::int64_t>> transcripts;
  for (const auto& e : read_manifest(p.manifest)) transcripts.push_back(e.transcript);
  const auto lkv = section(run.cfg, "lm");
  const long long order = lkv.get_int("order", 3);
  if (order < 1) throw ConfigError("lm.order", "lm.order must be >= 1");
  const double add_k = lkv.get_double("add_k", 0.1);
  if (!(add_k > 0.0)) throw ConfigError("lm.add_k", "lm.add_k must be > 0");
  const auto lm = train_ngram_lm(transcripts, static_cast<std::size_t>(order), add_k,
                                 spec.model_vocab_size());
  double logp = 0.0;
  std::size_t n = 0;
  for (const auto& t : transcripts) {
    std::vector<std::int64_t> hist;
    for (auto tok : t) {
      logp += lm.log_prob(hist, tok);
      hist.push_back(tok);
      ++n;
    }
    logp += lm.log_prob(hist, kEos);
    ++n;
  }
  const auto path = run.out / "lm.json";
  lm.save(path.string());
  run.meta(path);
  return "lm-train: order " + std::to_string(order) + " add-" + format_double(add_k) + " LM on " +
         std::to_string(transcripts.size()) + " transcripts, train perplexity " +
         fmt("%.3f", std::exp(-logp / static_cast<double>(n))) + " -> " + path.string();
}

// String-valued flags mirroring config keys; applied over the config file.
struct FlagOverrides {
  std::map<std::string, std::string> values;  // config key -> flag value
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; },
                                          help + " (config key " + key + ")");
  }
};

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-visual speech recognition with reliability scoring on synthetic data", "avrel"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string config_path, out_dir = "out";
  Paths paths;
  FlagOverrides flags;
  std::string visual_flag;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value config file");
    flags.add(sub, "--seed", "seed", "base seed");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    flags.add(sub, "--workers", "workers", "parallel clip workers (default $AVREL_THREADS or 1)");
  };
  auto condition = [&](CLI::App* sub) {
    flags.add(sub, "--snr", "eval.snr", "audio SNR in dB, or 'clean'");
    sub->add_option_function<std::string>(
           "--visual-corruption", [&](const std::string& v) { flags.values["eval.visual"] = v; },
           "visual test corruption (config key eval.visual)")
        ->check(CLI::IsMember({"occlusion", "noise", "both", "clean"}));
  };
  auto decoding = [&](CLI::App* sub) {
    flags.add(sub, "--beam-width", "decode.beam_width", "beam width");
    flags.add(sub, "--alpha", "decode.alpha", "attention weight; CTC gets 1 - alpha");
    flags.add(sub, "--beta", "decode.beta", "language model weight");
    sub->add_option("--lm", paths.lm, "n-gram LM from lm-train");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic train/test dataset");
  common(gen);

  auto* corrupt = app.add_subcommand("corrupt", "apply seeded corruption plans to a dataset");
  common(corrupt);
  condition(corrupt);
  corrupt->add_option("--manifest", paths.manifest, "dataset manifest (JSONL)")->required();

  auto* trn = app.add_subcommand("train", "train one model variant with curriculum stages");
  common(trn);
  flags.add(trn, "--lambda", "train.lambda", "CTC weight in the joint loss");
  flags.add(trn, "--stage-frames", "train.stage_frames", "comma list of per-stage max frames");
  flags.add(trn, "--epochs", "train.stage_epochs", "comma list of per-stage epochs");
  trn->add_option("--train", paths.manifest, "training manifest (JSONL)")->required();
  trn->add_option("--init-audio", paths.init_audio, "checkpoint whose audio front-end is copied");
  trn->add_option("--init-visual", paths.init_visual, "checkpoint whose visual front-end is copied");

  auto* dec = app.add_subcommand("decode", "decode a dataset with joint CTC/attention beam search");
  common(dec);
  condition(dec);
  decoding(dec);
  dec->add_option("--checkpoint", paths.checkpoint, "model checkpoint (.avrt)")->required();
  dec->add_option("--manifest", paths.manifest, "dataset manifest (JSONL)")->required();

  auto* grid = app.add_subcommand("eval-grid", "WER over visual corruption x SNR conditions");
  common(grid);
  condition(grid);
  decoding(grid);
  grid->add_option("--checkpoint", paths.checkpoints, "model checkpoint, repeatable")->required();
  grid->add_option("--manifest", paths.manifest, "test manifest (JSONL)")->required();

  auto* rel = app.add_subcommand("export-rel", "export per-frame reliability traces");
  common(rel);
  rel->add_option("--checkpoint", paths.checkpoint, "relscore checkpoint (.avrt)")->required();
  rel->add_option("--manifest", paths.manifest, "clean dataset manifest (JSONL)")->required();
  rel->add_option("--plans", paths.plans, "corruption plans from corrupt (JSONL)")->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op and the model loss");
  common(gc);

  auto* lmt = app.add_subcommand("lm-train", "train the n-gram language model on transcripts");
  common(lmt);
  lmt->add_option("--manifest", paths.manifest, "training manifest (JSONL)")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: kind=usage: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Run run;
    run.subcommand = sub->get_name();
    if (!config_path.empty()) run.cfg = KeyValueConfig::load(config_path);
    for (const auto& [k, v] : flags.values) run.cfg.set(k, v);
    validate_keys(run.cfg);
    const long long seed = run.cfg.get_int("seed", 1);
    if (seed < 0) throw ConfigError("seed", "seed must be >= 0");
    run.seed = static_cast<std::uint64_t>(seed);
    if (run.cfg.has("workers")) {
      const long long w = run.cfg.get_int("workers", 1);
      if (w < 1) throw ConfigError("workers", "workers must be >= 1");
      run.workers = static_cast<std::size_t>(w);
    } else {
      run.workers = default_workers();
    }
    validate_sections(run);
    run.out = out_dir;
    std::error_code ec;
    fs::create_directories(run.out, ec);
    if (ec || !fs::is_directory(run.out)) throw IoError("cannot create output directory " + out_dir);
    run.artifact(run.out / (run.subcommand + ".config.kv"), run.hashed().dump());

    std::string summary;
    int status = 0;
    const auto& name = run.subcommand;
    if (name == "gen-data") summary = cmd_gen_data(run);
    else if (name == "corrupt") summary = cmd_corrupt(run, paths);
    else if (name == "train") summary = cmd_train(run, paths, err);
    else if (name == "decode") summary = cmd_decode(run, paths);
    else if (name == "eval-grid") summary = cmd_eval_grid(run, paths);
    else if (name == "export-rel") summary = cmd_export_rel(run, paths);
    else if (name == "lm-train") summary = cmd_lm_train(run, paths);
    else if (name == "gradcheck") {
      bool failed = false;
      summary = cmd_gradcheck(run, failed);
      status = failed ? 1 : 0;
    }
    out << summary << "\n";
    return status;
  } catch (const ConfigError& e) {
    err << "error: kind=config key=" << e.key << ": " << e.what() << "\n";
  } catch (const Error& e) {
    err << "error: kind=" << e.kind() << ": " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: kind=internal: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace avrel
