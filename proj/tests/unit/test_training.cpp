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

#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "avrel/ops.hpp"
#include "avrel/training.hpp"
#include "doctest.h"
#include "support/tiny_model.hpp"

using namespace avrel;
using testing::random_audio;
using testing::random_video;
using testing::tiny_config;

namespace {

std::vector<double> log_softmax_rows(const std::vector<double>& x, std::size_t T, std::size_t V) {
  std::vector<double> out(x.size());
  for (std::size_t t = 0; t < T; ++t) {
    double z = 0.0;
    for (std::size_t k = 0; k < V; ++k) z += std::exp(x[t * V + k]);
    for (std::size_t k = 0; k < V; ++k) out[t * V + k] = x[t * V + k] - std::log(z);
  }
  return out;
}

std::vector<std::int64_t> collapse(const std::vector<std::int64_t>& path, std::int64_t blank) {
  std::vector<std::int64_t> out;
  std::int64_t prev = -1;
  for (auto k : path) {
    if (k != prev && k != blank) out.push_back(k);
    prev = k;
  }
  return out;
}

// Sums path probabilities over all V^T frame labellings.
double brute_force_ctc(const std::vector<double>& logits, std::size_t T, std::size_t V,
                       const std::vector<std::int64_t>& y, std::int64_t blank = 0) {
  const auto lp = log_softmax_rows(logits, T, V);
  std::vector<std::int64_t> path(T, 0);
  double total = 0.0;
  std::function<void(std::size_t, double)> rec = [&](std::size_t t, double logp) {
    if (t == T) {
      if (collapse(path, blank) == y) total += std::exp(logp);
      return;
    }
    for (std::size_t k = 0; k < V; ++k) {
      path[t] = static_cast<std::int64_t>(k);
      rec(t + 1, logp + lp[t * V + k]);
    }
  };
  rec(0, 0.0);
  return -std::log(total);
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double scale = 2.0) {
  Rng r(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = r.uniform(-scale, scale);
  return v;
}

std::vector<Example> tiny_dataset(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
  std::vector<Example> data;
  Rng r(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t T = 6 + static_cast<std::size_t>(r.uniform_int(0, 4));
    Example e;
    e.clip_id = "clip" + std::to_string(i);
    e.video = random_video(cfg, T, seed + 10 * i);
    e.audio = random_audio(cfg, T, seed + 10 * i + 1);
    const auto len = static_cast<std::size_t>(r.uniform_int(1, 2));
    for (std::size_t j = 0; j < len; ++j) e.tokens.push_back(r.uniform_int(kFirstSymbol, 5));
    data.push_back(std::move(e));
  }
  return data;
}

CorruptionResources tiny_resources() {
  CorruptionResources res;
  for (std::size_t i = 0; i < 3; ++i) {
    OcclusionPatch p;
    p.patch_id = i;
    p.pixels = Image::filled(3, 3, 1, 0.2 * static_cast<double>(i));
    p.alpha.assign(9, 0.9);
    res.patches.push_back(p);
  }
  res.config.patch_bank_size = 3;
  res.config.noise_bank_size = 2;
  res.babble.push_back(random_values(200, 71, 0.5));
  res.babble.push_back(random_values(200, 72, 0.5));
  return res;
}

}  // namespace

TEST_CASE("ctc matches exhaustive path enumeration") {
  Rng shape_rng(3);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto T = static_cast<std::size_t>(shape_rng.uniform_int(1, 6));
    const auto V = static_cast<std::size_t>(shape_rng.uniform_int(2, 4));
    const auto U = static_cast<std::size_t>(shape_rng.uniform_int(0, 3));
    std::vector<std::int64_t> y;
    for (std::size_t u = 0; u < U; ++u) {
      y.push_back(shape_rng.uniform_int(1, static_cast<std::int64_t>(V) - 1));
    }
    std::size_t repeats = 0;
    for (std::size_t u = 1; u < y.size(); ++u) repeats += y[u] == y[u - 1];
    const auto x = random_values(T * V, 100 + trial);
    if (T < U + repeats) {
      CHECK_THROWS_AS(ctc_loss(Tensor({T, V}, x), y), SizingError);
      continue;
    }
    const double expect = brute_force_ctc(x, T, V, y);
    CHECK(ctc_loss(Tensor({T, V}, x), y).item() == doctest::Approx(expect).epsilon(1e-10));
    CHECK(ctc_neg_log_likelihood(log_softmax_rows(x, T, V), T, V, y) ==
          doctest::Approx(expect).epsilon(1e-10));
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("ctc small hand cases") {
  // One frame, one label: -log p(a).
  std::vector<double> x{0.1, 0.7, -0.4};
  const auto lp = log_softmax_rows(x, 1, 3);
  CHECK(ctc_loss(Tensor({1, 3}, x), std::vector<std::int64_t>{1}).item() ==
        doctest::Approx(-lp[1]).epsilon(1e-12));
  // Empty target: all-blank path only.
  CHECK(ctc_loss(Tensor({1, 3}, x), std::vector<std::int64_t>{}).item() ==
        doctest::Approx(-lp[0]).epsilon(1e-12));

  // [a, a] needs a separating blank: T=3 has exactly one path a,blank,a.
  auto x3 = random_values(9, 9);
  const auto lp3 = log_softmax_rows(x3, 3, 3);
  const double one_path = -(lp3[1] + lp3[3] + lp3[7]);
  CHECK(ctc_loss(Tensor({3, 3}, x3), std::vector<std::int64_t>{1, 1}).item() ==
        doctest::Approx(one_path).epsilon(1e-12));
  CHECK_THROWS_AS(ctc_loss(Tensor({2, 3}, random_values(6, 1)), std::vector<std::int64_t>{1, 1}),
                  SizingError);
  CHECK_THROWS_AS(ctc_loss(Tensor({3, 3}, x3), std::vector<std::int64_t>{0}), Error);
  CHECK_THROWS_AS(ctc_loss(Tensor({3, 3}, x3), std::vector<std::int64_t>{3}), Error);
}

TEST_CASE("ctc gradient agrees with finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const std::size_t T = 5 + seed, V = 4;
    std::vector<std::int64_t> y{1, 2, 2};
    if (seed % 2) y = {3, 1};
    Tensor x({T, V}, random_values(T * V, seed), true);
    auto f = [&](const Tensor& in) { return ctc_loss(in, y); };
    CHECK(grad_check(f, x) < 1e-5);
  }
  // Gradient rows of a softmax-based loss sum to zero.
  Tensor x({6, 4}, random_values(24, 8), true);
  backward(ctc_loss(x, std::vector<std::int64_t>{1, 2}));
  for (std::size_t t = 0; t < 6; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += x.grad()[t * 4 + k];
    CHECK(std::abs(s) < 1e-12);
  }
}

TEST_CASE("attention loss") {
  // Uniform logits over 4 classes: ln 4 regardless of targets.
  Tensor u = Tensor::zeros({3, 4});
  CHECK(attention_loss(u, std::vector<std::int64_t>{0, 3, 1}).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-14));

  auto xs = random_values(15, 21);
  std::vector<std::int64_t> tgt{4, 0, 2};
  const auto lp = log_softmax_rows(xs, 3, 5);
  const double expect = -(lp[4] + lp[5] + lp[12]) / 3.0;
  CHECK(attention_loss(Tensor({3, 5}, xs), tgt).item() == doctest::Approx(expect).epsilon(1e-12));

  Tensor x({3, 5}, xs, true);
  CHECK(grad_check([&](const Tensor& in) { return attention_loss(in, tgt); }, x) < 1e-6);
  CHECK_THROWS_AS(attention_loss(Tensor({3, 5}, xs), std::vector<std::int64_t>{1, 2}), ShapeError);
  CHECK_THROWS_AS(attention_loss(Tensor({3, 5}, xs), std::vector<std::int64_t>{1, 2, 5}), Error);
}

TEST_CASE("joint loss weighting") {
  CHECK(joint_loss(3.0, 1.0, 0.9) == doctest::Approx(2.8).epsilon(1e-14));
  CHECK(joint_loss(3.0, 1.0, 0.0) == 1.0);
  CHECK(joint_loss(3.0, 1.0, 1.0) == 3.0);
  Tensor a = Tensor::scalar(3.0, true), c = Tensor::scalar(1.0, true);
  auto j = joint_loss(a, c, 0.9);
  CHECK(j.item() == doctest::Approx(2.8).epsilon(1e-14));
  backward(j);
  CHECK(a.grad()[0] == doctest::Approx(0.9));
  CHECK(c.grad()[0] == doctest::Approx(0.1));
  CHECK_THROWS_AS(joint_loss(1.0, 1.0, 1.5), ConfigError);
  CHECK_THROWS_AS(joint_loss(1.0, 1.0, -0.1), ConfigError);
}

TEST_CASE("learning-rate schedule") {
  const double peak = 4e-4;
  CHECK(lr_schedule(1, peak, 500) == doctest::Approx(peak / 500).epsilon(1e-14));
  CHECK(lr_schedule(250, peak, 500) == doctest::Approx(peak / 2).epsilon(1e-14));
  CHECK(lr_schedule(500, peak, 500) == doctest::Approx(peak).epsilon(1e-14));
  CHECK(lr_schedule(2000, peak, 500) == doctest::Approx(peak / 2).epsilon(1e-14));
  // Continuous at the warmup boundary, decreasing after it.
  CHECK(std::abs(lr_schedule(501, peak, 500) - lr_schedule(500, peak, 500)) < peak * 1e-3);
  for (std::size_t s = 501; s < 3000; s += 97) {
    CHECK(lr_schedule(s + 1, peak, 500) < lr_schedule(s, peak, 500));
  }
  CHECK_THROWS_AS(lr_schedule(0, peak, 500), ConfigError);
  CHECK_THROWS_AS(lr_schedule(1, peak, 0), ConfigError);
}

TEST_CASE("adam matches a scalar reference") {
  std::vector<Parameter> params;
  params.push_back({"w", Tensor({2}, {0.5, -1.0}, true), ""});
  AdamConfig ac{0.9, 0.98, 1e-9};
  Adam opt(params, ac);
  const std::vector<std::vector<double>> grads{{0.3, -2.0}, {0.1, 0.5}, {-0.4, 1.5}, {0.0, 0.2}};
  double w[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double lr = 1e-2;
  for (std::size_t step = 1; step <= grads.size(); ++step) {
    params[0].tensor.zero_grad();
    for (int i = 0; i < 2; ++i) params[0].tensor.mutable_grad()[i] = grads[step - 1][i];
    opt.step(lr);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[step - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.98 * v[i] + 0.02 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.98, step));
      w[i] -= lr * mh / (std::sqrt(vh) + 1e-9);
      CHECK(std::abs(params[0].tensor.values()[i] - w[i]) < 1e-12);
    }
  }
  CHECK(opt.steps() == 4);
}

TEST_CASE("adam step properties") {
  // First step moves every coordinate with nonzero gradient by about lr.
  std::vector<Parameter> params;
  params.push_back({"a", Tensor({3}, {1.0, 2.0, 3.0}, true), ""});
  params.push_back({"b", Tensor({1}, {0.0}, true), ""});
  Adam opt(params);
  params[0].tensor.mutable_grad()[0] = 5.0;
  params[0].tensor.mutable_grad()[1] = -0.01;
  opt.step(0.1);
  CHECK(params[0].tensor.values()[0] == doctest::Approx(0.9).epsilon(1e-8));
  CHECK(params[0].tensor.values()[1] == doctest::Approx(2.1).epsilon(1e-8));
  CHECK(params[0].tensor.values()[2] == 3.0);
  CHECK(params[1].tensor.values()[0] == 0.0);

  params[1].tensor.mutable_grad()[0] = std::nan("");
  try {
    opt.step(0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  CHECK(opt.steps() == 1);
  CHECK(params[0].tensor.values()[0] == doctest::Approx(0.9).epsilon(1e-8));
}

TEST_CASE("gradient clipping") {
  std::vector<Parameter> params;
  params.push_back({"a", Tensor({2}, {0.0, 0.0}, true), ""});
  params[0].tensor.mutable_grad()[0] = 3.0;
  params[0].tensor.mutable_grad()[1] = 4.0;
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(5.0));
  CHECK(params[0].tensor.grad()[0] == 3.0);
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(params[0].tensor.grad()[0] == doctest::Approx(0.6));
  CHECK(params[0].tensor.grad()[1] == doctest::Approx(0.8));
}

TEST_CASE("loss gradient through the full model") {
  auto cfg = tiny_config();
  AvRelModel m(cfg, 17);
  auto v = random_video(cfg, 4, 3);
  auto a = random_audio(cfg, 4, 4);
  std::vector<std::int64_t> tokens{3, 4};
  auto f = [&] { return example_loss(m, v, a, tokens, 0.7).l_joint; };
  std::vector<Tensor> leaves;
  for (auto& p : m.params().parameters()) leaves.push_back(p.tensor);
  CHECK(grad_check_leaves(f, leaves) < 1e-4);
}

TEST_CASE("teacher forcing sequences") {
  std::vector<std::int64_t> y{5, 3};
  CHECK(decoder_input(y) == std::vector<std::int64_t>{kSos, 5, 3});
  CHECK(decoder_target(y) == std::vector<std::int64_t>{5, 3, kEos});
}

TEST_CASE("plan seeds for training and evaluation never collide") {
  for (std::size_t e = 0; e < 50; ++e) {
    const auto s = train_plan_seed(7, e, "c" + std::to_string(e));
    CHECK((s & kEvalSeedBit) == 0);
    CHECK((eval_plan_seed(7, "snr0", "c" + std::to_string(e)) & kEvalSeedBit) != 0);
  }
  CHECK(train_plan_seed(7, 0, "a") != train_plan_seed(7, 1, "a"));
  CHECK(train_plan_seed(7, 0, "a") != train_plan_seed(7, 0, "b"));
}

TEST_CASE("curriculum stages filter by length") {
  auto cfg = tiny_config();
  AvRelModel m(cfg, 1);
  auto data = tiny_dataset(cfg, 8, 5);
  data[0].video = random_video(cfg, 20, 1);
  data[0].audio = random_audio(cfg, 20, 2);
  TrainConfig tc;
  tc.stages = {{10, 1}, {20, 2}};
  tc.warmup_steps = 5;
  tc.corrupt = false;
  std::vector<std::size_t> per_stage(2, 0);
  std::vector<std::size_t> ended;
  TrainHooks hooks;
  hooks.on_step = [&](const StepMetrics& s) { per_stage[s.stage]++; };
  hooks.on_stage_end = [&](std::size_t s) { ended.push_back(s); };
  auto log = train(m, data, tc, nullptr, hooks);
  CHECK(per_stage[0] == 7);
  CHECK(per_stage[1] == 16);
  CHECK(log.size() == 23);
  CHECK(ended == std::vector<std::size_t>{0, 1});
  for (std::size_t i = 0; i < log.size(); ++i) CHECK(log[i].step == i + 1);

  tc.stages = {{3, 1}};
  CHECK_THROWS_AS(train(m, data, tc, nullptr), Error);
}

TEST_CASE("batching accumulates the mean of per-example losses") {
  auto cfg = tiny_config();
  auto data = tiny_dataset(cfg, 5, 9);
  TrainConfig tc;
  tc.stages = {{20, 1}};
  tc.batch_size = 2;
  tc.corrupt = false;
  AvRelModel m(cfg, 2);
  auto log = train(m, data, tc, nullptr);
  CHECK(log.size() == 3);
}

TEST_CASE("training is deterministic") {
  auto cfg = tiny_config();
  auto data = tiny_dataset(cfg, 6, 3);
  auto res = tiny_resources();
  TrainConfig tc;
  tc.stages = {{8, 2}, {10, 2}};
  tc.warmup_steps = 10;
  tc.peak_lr = 3e-3;
  auto run = [&](std::uint64_t seed) {
    AvRelModel m(cfg, 4);
    tc.seed = seed;
    auto log = train(m, data, tc, &res);
    std::vector<double> w;
    for (auto& p : m.params().parameters()) {
      w.insert(w.end(), p.tensor.values().begin(), p.tensor.values().end());
    }
    return std::make_pair(log, w);
  };
  auto [l1, w1] = run(11);
  auto [l2, w2] = run(11);
  auto [l3, w3] = run(12);
  REQUIRE(l1.size() == l2.size());
  for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l1[i].l_joint == l2[i].l_joint);
  CHECK(w1 == w2);
  CHECK(w1 != w3);
}

TEST_CASE("overfitting a handful of clips lowers the loss") {
  auto cfg = tiny_config();
  auto data = tiny_dataset(cfg, 4, 8);
  TrainConfig tc;
  tc.stages = {{20, 60}};
  tc.warmup_steps = 20;
  tc.peak_lr = 1e-2;
  tc.corrupt = false;
  AvRelModel m(cfg, 6);
  auto log = train(m, data, tc, nullptr);
  auto mean = [&](std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += log[i].l_joint;
    return s / static_cast<double>(e - b);
  };
  CHECK(mean(log.size() - 8, log.size()) < 0.5 * mean(0, 8));
}

TEST_CASE("train config") {
  TrainConfig c;
  c.lambda = 0.7;
  c.stages = {{5, 1}, {9, 3}};
  c.corrupt = false;
  auto back = TrainConfig::from_kv(c.to_kv());
  CHECK(back.lambda == 0.7);
  CHECK(back.stages.size() == 2);
  CHECK(back.stages[1].max_frames == 9);
  CHECK(back.stages[1].epochs == 3);
  CHECK_FALSE(back.corrupt);

  auto bad = [](const std::string& key, const std::string& value) {
    KeyValueConfig kv;
    kv.set(key, value);
    try {
      TrainConfig::from_kv(kv);
    } catch (const ConfigError& e) {
      return e.key == key;
    }
    return false;
  };
  CHECK(bad("lambda", "2"));
  CHECK(bad("peak_lr", "-1"));
  CHECK(bad("warmup_steps", "0"));
  CHECK(bad("batch_size", "0"));
  CHECK(bad("stage_frames", "10,5,40"));
  CHECK(bad("stage_epochs", "1,2"));
}

TEST_CASE("front-end transfer copies matching tensors only") {
  AvRelModel audio(testing::tiny_config(ModelVariant::kAudioOnly), 1);
  AvRelModel fused(testing::tiny_config(), 2);
  std::vector<std::vector<double>> before;
  for (const auto& t : fused.params().named_tensors()) before.emplace_back(t.tensor.values().begin(), t.tensor.values().end());
  const std::size_t n = transfer_parameters(fused, audio, "frontend.a.", "frontend.a.");
  CHECK(n > 0);
  std::map<std::string, Tensor> src;
  for (const auto& t : audio.params().named_tensors()) src.emplace(t.name, t.tensor);
  std::size_t same = 0;
  for (const auto& t : fused.params().named_tensors()) {
    if (t.name.rfind("frontend.a.", 0) == 0) {
      CHECK(std::vector<double>(t.tensor.values().begin(), t.tensor.values().end()) ==
            std::vector<double>(src.at(t.name).values().begin(), src.at(t.name).values().end()));
      ++same;
    }
  }
  CHECK(same == n);
  // Everything else untouched.
  const auto after = fused.params().named_tensors();
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (after[i].name.rfind("frontend.a.", 0) == 0) continue;
    CHECK(before[i] == std::vector<double>(after[i].tensor.values().begin(), after[i].tensor.values().end()));
  }
  CHECK_THROWS_AS(transfer_parameters(fused, audio, "no.such.", "no.such."), Error);
  CHECK_THROWS_AS(transfer_parameters(audio, fused, "frontend.v.", "frontend.v."), Error);
  AvRelModel wide([] {
    auto c = testing::tiny_config();
    c.audio_channels = {3, 3};
    return c;
  }(), 3);
  CHECK_THROWS_AS(transfer_parameters(fused, wide, "frontend.a.", "frontend.a."), ShapeError);
}
