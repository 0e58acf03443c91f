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

#include "avrel/ops.hpp"
#include "avrel/tensor.hpp"
#include "doctest.h"
#include "support/op_gradcheck.hpp"

using namespace avrel;

TEST_CASE("catalog examples") {
  CHECK(ops::sigmoid(Tensor::scalar(0.0)).item() == 0.5);

  auto sm = ops::softmax(Tensor({3}, {0, 0, 0}), 0);
  for (double p : sm.values()) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto h = ops::hadamard(Tensor({2}, {2, 3}), Tensor({2}, {0.5, 1}));
  CHECK(h.values()[0] == 1.0);
  CHECK(h.values()[1] == 3.0);
}

TEST_CASE("backward examples") {
  Tensor w({2}, {1, 2}, true);
  backward(ops::sum(ops::hadamard(w, w)));
  CHECK(w.grad()[0] == 2.0);
  CHECK(w.grad()[1] == 4.0);

  Tensor x = Tensor::scalar(0.0, true);
  backward(ops::sigmoid(x));
  CHECK(x.grad()[0] == 0.25);
}

TEST_CASE("gradients accumulate across uses and calls") {
  Tensor w({1}, {3.0}, true);
  backward(ops::add(ops::scale(w, 2.0), w));
  CHECK(w.grad()[0] == 3.0);
  backward(ops::scale(w, 1.0));
  CHECK(w.grad()[0] == 4.0);
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("every catalog op matches central differences") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    for (const auto& r : testing::catalog_gradchecks(seed)) {
      INFO(r.name << " seed " << seed);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("catalog sweep covers every op") {
  auto results = testing::catalog_gradchecks(7);
  for (auto op : ops::op_catalog()) {
    const std::string name(ops::op_name(op));
    bool found = false;
    for (const auto& r : results) {
      if (r.name == name || r.name.rfind(name + "/", 0) == 0) found = true;
    }
    INFO(name);
    CHECK(found);
  }
}

TEST_CASE("grad_check examples") {
  Rng rng(11);
  auto x = testing::random_tensor(rng, {4, 3});
  CHECK(grad_check([](const Tensor& t) { return ops::sum(t); }, x) < 1e-9);
  auto y = testing::random_tensor(rng, {10}, -1, 1, 0.1);
  CHECK(grad_check([](const Tensor& t) { return ops::sum(ops::relu(t)); }, y) < 1e-6);
}

TEST_CASE("grad_check rejects non-finite values") {
  Tensor x({2}, {1.0, 2.0});
  auto f = [](const Tensor& t) {
    return ops::sum(ops::scale(t, std::numeric_limits<double>::infinity()));
  };
  CHECK_THROWS_AS(grad_check(f, x), NumericError);
  CHECK_THROWS_AS(grad_check([](const Tensor& t) { return ops::sum(t); }, x, 0.0), ConfigError);
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = testing::random_tensor(rng, {4, 7}, -30, 30);
    auto p = ops::softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(p.values()[r * 7 + c] >= 0.0);
        s += p.values()[r * 7 + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("layer_norm standardizes each row") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = testing::random_tensor(rng, {3, 16}, -5, 5);
    auto y = ops::layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}));
    for (std::size_t r = 0; r < 3; ++r) {
      double m = 0.0, v = 0.0;
      for (std::size_t c = 0; c < 16; ++c) m += y.values()[r * 16 + c];
      m /= 16;
      for (std::size_t c = 0; c < 16; ++c) v += std::pow(y.values()[r * 16 + c] - m, 2);
      v /= 16;
      CHECK(std::abs(m) < 1e-7);
      CHECK(std::abs(v - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("concat then slice is the identity") {
  Rng rng(8);
  for (std::size_t axis : {0u, 1u, 2u}) {
    auto a = testing::random_tensor(rng, {2, 3, 4});
    Shape sb{2, 3, 4};
    sb[axis] = 5;
    auto b = testing::random_tensor(rng, sb);
    std::vector<Tensor> parts{a, b};
    auto c = ops::concat(parts, axis);
    auto a2 = ops::slice(c, axis, 0, a.dim(axis));
    auto b2 = ops::slice(c, axis, a.dim(axis), b.dim(axis));
    CHECK(std::equal(a.values().begin(), a.values().end(), a2.values().begin()));
    CHECK(std::equal(b.values().begin(), b.values().end(), b2.values().begin()));
  }
}

TEST_CASE("batch_norm running statistics") {
  Tensor x({4, 1}, {1, 2, 3, 4}, false);
  Tensor rm = Tensor::zeros({1}), rv = Tensor::full({1}, 1.0);
  auto y = ops::batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), rm, rv, true, 0.1);
  CHECK(rm.values()[0] == doctest::Approx(0.25));
  // Unbiased variance of {1,2,3,4} is 5/3.
  CHECK(rv.values()[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0));
  CHECK(y.values()[0] < 0.0);
  // Eval mode leaves the buffers untouched.
  auto before = rm.values()[0];
  ops::batch_norm(x, Tensor::full({1}, 1.0), Tensor::zeros({1}), rm, rv, false);
  CHECK(rm.values()[0] == before);
}

TEST_CASE("causal attention ignores future keys") {
  Rng rng(9);
  auto q = testing::random_tensor(rng, {4, 4});
  auto k = testing::random_tensor(rng, {4, 4});
  auto v = testing::random_tensor(rng, {4, 4});
  auto out1 = ops::scaled_dot_product_attention(q, k, v, 2, true);
  auto k2 = k.detach();
  auto v2 = v.detach();
  for (std::size_t d = 0; d < 4; ++d) {
    k2.mutable_values()[3 * 4 + d] += 1.0;
    v2.mutable_values()[3 * 4 + d] -= 2.0;
  }
  auto out2 = ops::scaled_dot_product_attention(q, k2, v2, 2, true);
  for (std::size_t i = 0; i < 3 * 4; ++i) CHECK(out1.values()[i] == out2.values()[i]);
}

TEST_CASE("shape errors name the op and shapes") {
  try {
    ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[4x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(ops::conv1d(Tensor::zeros({5, 3}), Tensor::zeros({2, 2, 3}), {}, 1, 0),
                  ShapeError);
}

TEST_CASE("backward requires a scalar loss") {
  Tensor w({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(ops::scale(w, 2.0)), ShapeError);
}

TEST_CASE("no-grad mode records nothing") {
  Tensor w({2}, {1, 2}, true);
  NoGradGuard guard;
  auto y = ops::sum(w);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("conv1d output length follows stride arithmetic") {
  auto y = ops::conv1d(Tensor::zeros({6400, 1}), Tensor::zeros({2, 1, 8}), {}, 4, 2);
  CHECK(y.dim(0) == 1600);
}

TEST_CASE("positional encoding") {
  auto pe = ops::positional_encoding(3, 4);
  CHECK(pe.values()[0] == 0.0);
  CHECK(pe.values()[1] == 1.0);
  CHECK(pe.values()[4] == doctest::Approx(std::sin(1.0)));
  CHECK(pe.values()[4 + 2] == doctest::Approx(std::sin(0.01)));
  auto rel = ops::relative_positional_encoding(3, 4);
  CHECK(rel.dim(0) == 5);
  CHECK(rel.values()[0] == doctest::Approx(std::sin(-2.0)));
}

TEST_CASE("relative position scores index by time modulo the period") {
  Rng rng(21);
  auto rnd = [&](Shape s) {
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = rng.uniform(-1, 1);
    return Tensor(s, v);
  };
  const std::size_t L = 6, P = 3, D = 4, H = 2, dk = D / H;
  auto q = rnd({L, D}), p = rnd({2 * P - 1, D});
  auto out = ops::relative_position_scores(q, p, H, P);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) {
        const long dist = static_cast<long>(j % P) - static_cast<long>(i % P);
        double want = 0.0;
        for (std::size_t d = 0; d < dk; ++d) {
          want += q.value(i * D + h * dk + d) * p.value((dist + static_cast<long>(P) - 1) * D + h * dk + d);
        }
        CHECK(out.value((h * L + i) * L + j) == want);
      }
  // Period 0 means the plain form, which needs 2L-1 rows.
  CHECK_THROWS_AS(ops::relative_position_scores(q, p, H), ShapeError);
  CHECK_THROWS_AS(ops::relative_position_scores(q, p, H, 4), ShapeError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(10);
  ParameterSet ps;
  ps.add("enc.w", {3, 4}, "uniform_fan_in", 3, rng);
  ps.add("enc.b", {4}, "zeros", 0, rng);
  ps.add_buffer("bn.running_var", {4}, 1.0);
  ps.parameters()[0].tensor.mutable_values()[0] = -0.0;
  ps.parameters()[0].tensor.mutable_values()[1] = 1e-310;
  const auto bytes = encode_checkpoint(ps.named_tensors());
  CHECK(bytes.substr(0, 4) == "AVRT");
  CHECK(bytes[4] == 1);
  auto decoded = decode_checkpoint(bytes);
  REQUIRE(decoded.size() == 3);
  CHECK(decoded[0].name == "enc.w");
  CHECK(encode_checkpoint(decoded) == bytes);

  Rng rng2(99);
  ParameterSet other;
  other.add("enc.w", {3, 4}, "uniform_fan_in", 3, rng2);
  other.add("enc.b", {4}, "zeros", 0, rng2);
  other.add_buffer("bn.running_var", {4}, 0.0);
  other.load(decoded);
  CHECK(encode_checkpoint(other.named_tensors()) == bytes);
  CHECK(std::signbit(other.parameters()[0].tensor.values()[0]));
}

TEST_CASE("checkpoint layout") {
  std::vector<NamedTensor> one{{"ab", Tensor({1, 2}, {1.0, -2.0})}};
  const auto bytes = encode_checkpoint(one);
  // magic + version + u32 name len + name + u32 rank + 2*u64 extents + 2 doubles
  CHECK(bytes.size() == 4 + 1 + 4 + 2 + 4 + 16 + 16);
  CHECK(bytes[5] == 2);
  CHECK(bytes[11] == 2);
  CHECK(bytes[15] == 1);
  CHECK(bytes[23] == 2);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), IoError);
  CHECK_THROWS_AS(decode_checkpoint("XXXX\x01"), IoError);
}

TEST_CASE("parameter names are unique") {
  Rng rng(1);
  ParameterSet ps;
  ps.add("w", {2}, "zeros", 0, rng);
  CHECK_THROWS(ps.add("w", {2}, "zeros", 0, rng));
  CHECK_THROWS_AS(ps.add("v", {2}, "gaussian", 0, rng), ConfigError);
}
