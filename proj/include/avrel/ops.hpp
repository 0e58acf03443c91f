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
#include <span>
#include <string_view>
#include <vector>

#include "avrel/tensor.hpp"

// Differentiable op catalog. Sequences are time-major: a feature sequence is
// [T x D], a 1D conv input is [L x C_in]. Images are NCHW.
namespace avrel::ops {

// 2D matrix product [m x k] * [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise; `b` may also match a trailing suffix of a's shape (broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length);
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);

// x [L x C_in], weight [C_out x C_in/groups x K], bias [C_out] or undefined.
// Output [L_out x C_out], L_out = (L + 2*padding - K) / stride + 1.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding, std::size_t groups = 1);

// x [N x C_in x H x W], weight [C_out x C_in x K x K], bias [C_out].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor swish(const Tensor& a);
Tensor log(const Tensor& a);

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);

// Normalizes over the last axis, then gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-8);

// x [L x C]; statistics over axis 0. In training mode the running buffers
// are updated with `momentum`; in eval mode they normalize the input.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training,
                  double momentum = 0.1, double eps = 1e-5);

// q [Lq x D], k/v [Lk x D]; heads split D. `bias` [H x Lq x Lk] is added to
// the raw dot products before the 1/sqrt(D/H) scaling.
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k,
                                    const Tensor& v, std::size_t heads,
                                    bool causal, const Tensor& bias = {});

// out[h][i][j] = <q_h[i], p_h[(pos(j) - pos(i)) + P - 1]>, q [L x D],
// p [(2P-1) x D], pos(i) = i mod P. period 0 means P = L; a period that
// divides L treats the rows as L/P streams sharing one time axis.
Tensor relative_position_scores(const Tensor& q, const Tensor& p,
                                std::size_t heads, std::size_t period = 0);

// Sinusoidal table, row r encodes position `first + r`.
Tensor positional_encoding(std::size_t rows, std::size_t dim,
                           double first = 0.0);
// Rows encode relative distances -(length-1) .. (length-1).
Tensor relative_positional_encoding(std::size_t length, std::size_t dim);

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids);

Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a);

// ---------------------------------------------------------------------------
// Uniform dispatch over the catalog.

enum class Op {
  kMatmul,
  kAdd,
  kHadamard,
  kScale,
  kConcat,
  kSlice,
  kReshape,
  kTranspose,
  kConv1d,
  kConv2d,
  kSigmoid,
  kRelu,
  kSwish,
  kLog,
  kSoftmax,
  kLogSoftmax,
  kLayerNorm,
  kBatchNorm,
  kAttention,
  kRelativePositionScores,
  kPositionalEncoding,
  kEmbeddingLookup,
  kMean,
  kSum,
};

struct OpAttrs {
  std::size_t axis = 0;
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  std::size_t heads = 1;
  bool causal = false;
  bool training = true;
  bool reduce_all = true;
  double factor = 1.0;
  double eps = 1e-5;
  double momentum = 0.1;
  Shape shape;
  std::vector<std::int64_t> ids;
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
};

std::string_view op_name(Op op);
std::span<const Op> op_catalog();

// Applies a catalog op. Input order follows the typed functions above;
// optional tensors (bias) may be passed undefined.
Tensor op_apply(Op op, std::span<const Tensor> inputs, const OpAttrs& attrs);

}  // namespace avrel::ops
