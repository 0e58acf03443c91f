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

#include "avrel/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>

namespace avrel::ops {

namespace {

[[noreturn]] void shape_fail(std::string_view op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank,
                  std::string_view what = "input") {
  if (!t.defined() || t.rank() != rank) {
    shape_fail(op, std::string(what) + " must have rank " + std::to_string(rank) +
                       ", got " + shape_str(t.shape()));
  }
}

// Outer/axis/inner decomposition for reductions along one axis.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(std::string_view op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    shape_fail(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

// Number of repeats of b inside a when b's shape is a trailing suffix of a's.
std::size_t broadcast_repeats(std::string_view op, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return 1;
  if (sb.size() <= sa.size() &&
      std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()))) {
    return a.numel() / b.numel();
  }
  shape_fail(op, "cannot combine " + shape_str(sa) + " with " + shape_str(sb));
}

std::vector<double> copy_values(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

// Row-major accumulating products: C[m x n] += op(A) * op(B).
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// B is [n x k].
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* A, const double* B,
             double* C) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = B + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      C[i * n + j] += s;
    }
  }
}

// A is [k x m].
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* A, const double* B,
             double* C) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = A[p * m + i];
      if (av == 0.0) continue;
      double* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    shape_fail("matmul", "inner extents differ: " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_op_result("matmul", {m, n}, std::move(out), {a, b},
                        [m, k, n](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0], b = ctx.inputs[1];
                          const double* G = ctx.out_grad.data();
                          if (a.requires_grad()) {
                            auto ga = a.mutable_grad();
                            const double* B = b.values().data();
                            for (std::size_t i = 0; i < m; ++i) {
                              const double* grow = G + i * n;
                              for (std::size_t p = 0; p < k; ++p) {
                                const double* brow = B + p * n;
                                double s = 0.0;
                                for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                                ga[i * k + p] += s;
                              }
                            }
                          }
                          if (b.requires_grad()) {
                            auto gb = b.mutable_grad();
                            const double* A = a.values().data();
                            for (std::size_t i = 0; i < m; ++i) {
                              const double* grow = G + i * n;
                              for (std::size_t p = 0; p < k; ++p) {
                                const double av = A[i * k + p];
                                if (av == 0.0) continue;
                                double* gbrow = gb.data() + p * n;
                                for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                              }
                            }
                          }
                        });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats("add", a, b);
  const std::size_t nb = b.numel();
  std::vector<double> out = copy_values(a);
  auto bv = b.values();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < nb; ++i) out[r * nb + i] += bv[i];
  }
  return make_op_result("add", a.shape(), std::move(out), {a, b},
                        [reps, nb](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0], b = ctx.inputs[1];
                          if (a.requires_grad()) {
                            auto ga = a.mutable_grad();
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ctx.out_grad[i];
                          }
                          if (b.requires_grad()) {
                            auto gb = b.mutable_grad();
                            for (std::size_t r = 0; r < reps; ++r) {
                              for (std::size_t i = 0; i < nb; ++i) gb[i] += ctx.out_grad[r * nb + i];
                            }
                          }
                        });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  const std::size_t reps = broadcast_repeats("hadamard", a, b);
  const std::size_t nb = b.numel();
  std::vector<double> out = copy_values(a);
  auto bv = b.values();
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < nb; ++i) out[r * nb + i] *= bv[i];
  }
  return make_op_result("hadamard", a.shape(), std::move(out), {a, b},
                        [reps, nb](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0], b = ctx.inputs[1];
                          auto av = a.values();
                          auto bv = b.values();
                          if (a.requires_grad()) {
                            auto ga = a.mutable_grad();
                            for (std::size_t r = 0; r < reps; ++r) {
                              for (std::size_t i = 0; i < nb; ++i) {
                                ga[r * nb + i] += ctx.out_grad[r * nb + i] * bv[i];
                              }
                            }
                          }
                          if (b.requires_grad()) {
                            auto gb = b.mutable_grad();
                            for (std::size_t r = 0; r < reps; ++r) {
                              for (std::size_t i = 0; i < nb; ++i) {
                                gb[i] += ctx.out_grad[r * nb + i] * av[r * nb + i];
                              }
                            }
                          }
                        });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out = copy_values(a);
  for (auto& v : out) v *= factor;
  return make_op_result("scale", a.shape(), std::move(out), {a},
                        [factor](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0];
                          auto ga = a.mutable_grad();
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * ctx.out_grad[i];
                        });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) shape_fail("concat", "axis out of range for " + shape_str(ref));
  Shape out_shape = ref;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) ok = false;
    }
    if (!ok) shape_fail("concat", "incompatible " + shape_str(s) + " vs " + shape_str(ref));
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisView v = axis_view("concat", out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    auto pv = parts[pi].values();
    const std::size_t block = extents[pi] * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(pv.data() + o * block, block,
                  out.data() + o * v.extent * v.inner + offset * v.inner);
    }
    offset += extents[pi];
  }
  return make_op_result("concat", out_shape, std::move(out),
                        std::vector<Tensor>(parts.begin(), parts.end()),
                        [v, extents](const BackwardContext& ctx) {
                          std::size_t offset = 0;
                          for (std::size_t pi = 0; pi < ctx.inputs.size(); ++pi) {
                            Tensor p = ctx.inputs[pi];
                            const std::size_t block = extents[pi] * v.inner;
                            if (p.requires_grad()) {
                              auto gp = p.mutable_grad();
                              for (std::size_t o = 0; o < v.outer; ++o) {
                                const double* src = ctx.out_grad.data() +
                                                    o * v.extent * v.inner + offset * v.inner;
                                for (std::size_t i = 0; i < block; ++i) gp[o * block + i] += src[i];
                              }
                            }
                            offset += extents[pi];
                          }
                        });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length) {
  const AxisView v = axis_view("slice", a.shape(), axis);
  if (start + length > v.extent || length == 0) {
    shape_fail("slice", "range [" + std::to_string(start) + ", " +
                            std::to_string(start + length) + ") invalid for axis " +
                            std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<double> out(shape_numel(out_shape));
  auto av = a.values();
  const std::size_t block = length * v.inner;
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(av.data() + o * v.extent * v.inner + start * v.inner, block,
                out.data() + o * block);
  }
  return make_op_result("slice", out_shape, std::move(out), {a},
                        [v, start, block](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0];
                          auto ga = a.mutable_grad();
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            double* dst = ga.data() + o * v.extent * v.inner + start * v.inner;
                            for (std::size_t i = 0; i < block; ++i) dst[i] += ctx.out_grad[o * block + i];
                          }
                        });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    shape_fail("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return make_op_result("reshape", std::move(shape), copy_values(a), {a},
                        [](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0];
                          auto ga = a.mutable_grad();
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ctx.out_grad[i];
                        });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  }
  return make_op_result("transpose", {n, m}, std::move(out), {a},
                        [m, n](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0];
                          auto ga = a.mutable_grad();
                          for (std::size_t i = 0; i < m; ++i) {
                            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += ctx.out_grad[j * m + i];
                          }
                        });
}

// ---------------------------------------------------------------------------
// Convolutions

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding, std::size_t groups) {
  require_rank("conv1d", x, 2);
  require_rank("conv1d", weight, 3, "weight");
  const std::size_t L = x.dim(0), cin = x.dim(1);
  const std::size_t cout = weight.dim(0), cig = weight.dim(1), K = weight.dim(2);
  if (stride == 0 || groups == 0 || cin % groups != 0 || cout % groups != 0 ||
      cig * groups != cin) {
    shape_fail("conv1d", "weight " + shape_str(weight.shape()) + " incompatible with input " +
                             shape_str(x.shape()) + " and groups=" + std::to_string(groups));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    shape_fail("conv1d", "bias " + shape_str(bias.shape()) + " must be [" + std::to_string(cout) + "]");
  }
  if (L + 2 * padding < K) {
    shape_fail("conv1d", "input length " + std::to_string(L) + " shorter than kernel " +
                             std::to_string(K));
  }
  const std::size_t Lout = (L + 2 * padding - K) / stride + 1;
  const std::size_t cog = cout / groups;
  const double* X = x.values().data();
  const double* W = weight.values().data();
  std::vector<double> out(Lout * cout, 0.0);
  if (bias.defined()) {
    auto bv = bias.values();
    for (std::size_t t = 0; t < Lout; ++t) std::copy(bv.begin(), bv.end(), out.begin() + t * cout);
  }
  // Dense path uses a [K x C_in x C_out] relayout so the inner loop is contiguous.
  std::shared_ptr<std::vector<double>> wt;
  if (groups == 1) {
    wt = std::make_shared<std::vector<double>>(K * cin * cout);
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t k = 0; k < K; ++k) (*wt)[(k * cin + c) * cout + o] = W[(o * cin + c) * K + k];
    for (std::size_t t = 0; t < Lout; ++t) {
      double* orow = out.data() + t * cout;
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(t * stride + k) -
                                  static_cast<std::ptrdiff_t>(padding);
        if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(L)) continue;
        const double* xrow = X + xi * cin;
        for (std::size_t c = 0; c < cin; ++c) {
          const double xv = xrow[c];
          if (xv == 0.0) continue;
          const double* wrow = wt->data() + (k * cin + c) * cout;
          for (std::size_t o = 0; o < cout; ++o) orow[o] += xv * wrow[o];
        }
      }
    }
  } else {
    for (std::size_t t = 0; t < Lout; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(t * stride + k) -
                                  static_cast<std::ptrdiff_t>(padding);
        if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(L)) continue;
        const double* xrow = X + xi * cin;
        for (std::size_t o = 0; o < cout; ++o) {
          const std::size_t g = o / cog;
          double s = 0.0;
          for (std::size_t c = 0; c < cig; ++c) s += W[(o * cig + c) * K + k] * xrow[g * cig + c];
          out[t * cout + o] += s;
        }
      }
    }
  }
  return make_op_result(
      "conv1d", {Lout, cout}, std::move(out), {x, weight, bias},
      [=](const BackwardContext& ctx) {
        Tensor x = ctx.inputs[0], w = ctx.inputs[1], b = ctx.inputs[2];
        const double* G = ctx.out_grad.data();
        const double* X = x.values().data();
        const double* W = w.values().data();
        if (b.defined() && b.requires_grad()) {
          auto gb = b.mutable_grad();
          for (std::size_t t = 0; t < Lout; ++t)
            for (std::size_t o = 0; o < cout; ++o) gb[o] += G[t * cout + o];
        }
        const bool need_x = x.requires_grad(), need_w = w.requires_grad();
        double* gx = need_x ? x.mutable_grad().data() : nullptr;
        if (groups == 1) {
          std::vector<double> gwt(need_w ? K * cin * cout : 0, 0.0);
          for (std::size_t t = 0; t < Lout; ++t) {
            const double* grow = G + t * cout;
            for (std::size_t k = 0; k < K; ++k) {
              const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(t * stride + k) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(L)) continue;
              const double* xrow = X + xi * cin;
              for (std::size_t c = 0; c < cin; ++c) {
                const double* wrow = wt->data() + (k * cin + c) * cout;
                if (need_x) {
                  double s = 0.0;
                  for (std::size_t o = 0; o < cout; ++o) s += grow[o] * wrow[o];
                  gx[xi * cin + c] += s;
                }
                if (need_w) {
                  const double xv = xrow[c];
                  if (xv == 0.0) continue;
                  double* gwrow = gwt.data() + (k * cin + c) * cout;
                  for (std::size_t o = 0; o < cout; ++o) gwrow[o] += xv * grow[o];
                }
              }
            }
          }
          if (need_w) {
            auto gw = w.mutable_grad();
            for (std::size_t o = 0; o < cout; ++o)
              for (std::size_t c = 0; c < cin; ++c)
                for (std::size_t k = 0; k < K; ++k)
                  gw[(o * cin + c) * K + k] += gwt[(k * cin + c) * cout + o];
          }
        } else {
          double* gw = need_w ? w.mutable_grad().data() : nullptr;
          for (std::size_t t = 0; t < Lout; ++t) {
            for (std::size_t k = 0; k < K; ++k) {
              const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(t * stride + k) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (xi < 0 || xi >= static_cast<std::ptrdiff_t>(L)) continue;
              for (std::size_t o = 0; o < cout; ++o) {
                const std::size_t g = o / cog;
                const double go = G[t * cout + o];
                for (std::size_t c = 0; c < cig; ++c) {
                  const std::size_t xc = xi * cin + g * cig + c;
                  if (need_x) gx[xc] += go * W[(o * cig + c) * K + k];
                  if (need_w) gw[(o * cig + c) * K + k] += go * X[xc];
                }
              }
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4, "weight");
  const std::size_t N = x.dim(0), cin = x.dim(1), H = x.dim(2), Wd = x.dim(3);
  const std::size_t cout = weight.dim(0), K = weight.dim(2);
  if (weight.dim(1) != cin || weight.dim(3) != K || stride == 0) {
    shape_fail("conv2d", "weight " + shape_str(weight.shape()) + " incompatible with input " +
                             shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    shape_fail("conv2d", "bias " + shape_str(bias.shape()) + " must be [" + std::to_string(cout) + "]");
  }
  if (H + 2 * padding < K || Wd + 2 * padding < K) {
    shape_fail("conv2d", "input " + shape_str(x.shape()) + " smaller than kernel");
  }
  const std::size_t Ho = (H + 2 * padding - K) / stride + 1;
  const std::size_t Wo = (Wd + 2 * padding - K) / stride + 1;
  // im2col: one row per output pixel, columns ordered like the weight layout.
  const std::size_t P = Ho * Wo, CKK = cin * K * K;
  auto cols = std::make_shared<std::vector<double>>(N * P * CKK, 0.0);
  // Source index per column entry, -1 for padding; shared by col2im.
  auto src = std::make_shared<std::vector<std::ptrdiff_t>>(P * cin * K * K, -1);
  for (std::size_t oh = 0; oh < Ho; ++oh)
    for (std::size_t ow = 0; ow < Wo; ++ow)
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t kh = 0; kh < K; ++kh)
          for (std::size_t kw = 0; kw < K; ++kw) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * stride + kh) -
                            static_cast<std::ptrdiff_t>(padding);
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kw) -
                            static_cast<std::ptrdiff_t>(padding);
            if (ih < 0 || iw < 0 || ih >= static_cast<std::ptrdiff_t>(H) ||
                iw >= static_cast<std::ptrdiff_t>(Wd))
              continue;
            (*src)[(oh * Wo + ow) * CKK + (c * K + kh) * K + kw] =
                static_cast<std::ptrdiff_t>(c * H * Wd) + ih * static_cast<std::ptrdiff_t>(Wd) + iw;
          }
  const double* X = x.values().data();
  for (std::size_t n = 0; n < N; ++n) {
    const double* xn = X + n * cin * H * Wd;
    double* cn = cols->data() + n * P * CKK;
    for (std::size_t i = 0; i < P * CKK; ++i) {
      if ((*src)[i] >= 0) cn[i] = xn[(*src)[i]];
    }
  }
  std::vector<double> om(N * P * cout, 0.0);
  gemm_nt(N * P, CKK, cout, cols->data(), weight.values().data(), om.data());
  std::vector<double> out(N * cout * P);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < cout; ++o) {
      const double bv = bias.defined() ? bias.values()[o] : 0.0;
      for (std::size_t p = 0; p < P; ++p) out[(n * cout + o) * P + p] = om[(n * P + p) * cout + o] + bv;
    }
  return make_op_result(
      "conv2d", {N, cout, Ho, Wo}, std::move(out), {x, weight, bias},
      [=](const BackwardContext& ctx) {
        Tensor x = ctx.inputs[0], w = ctx.inputs[1], b = ctx.inputs[2];
        const double* G = ctx.out_grad.data();
        std::vector<double> gm(N * P * cout);
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t p = 0; p < P; ++p) gm[(n * P + p) * cout + o] = G[(n * cout + o) * P + p];
        if (b.defined() && b.requires_grad()) {
          auto gb = b.mutable_grad();
          for (std::size_t r = 0; r < N * P; ++r)
            for (std::size_t o = 0; o < cout; ++o) gb[o] += gm[r * cout + o];
        }
        if (w.requires_grad()) {
          gemm_tn(cout, N * P, CKK, gm.data(), cols->data(), w.mutable_grad().data());
        }
        if (x.requires_grad()) {
          std::vector<double> gcols(N * P * CKK, 0.0);
          gemm_nn(N * P, cout, CKK, gm.data(), w.values().data(), gcols.data());
          double* gx = x.mutable_grad().data();
          for (std::size_t n = 0; n < N; ++n) {
            double* gxn = gx + n * cin * H * Wd;
            const double* gc = gcols.data() + n * P * CKK;
            for (std::size_t i = 0; i < P * CKK; ++i) {
              if ((*src)[i] >= 0) gxn[(*src)[i]] += gc[i];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

namespace {

template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_op_result(name, a.shape(), std::move(out), {a},
                        [deriv](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0];
                          auto av = a.values();
                          auto ga = a.mutable_grad();
                          for (std::size_t i = 0; i < ga.size(); ++i) {
                            ga[i] += ctx.out_grad[i] * deriv(av[i], ctx.out_value[i]);
                          }
                        });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor swish(const Tensor& a) {
  return unary("swish", a, [](double x) { return x * stable_sigmoid(x); },
               [](double x, double) {
                 const double s = stable_sigmoid(x);
                 return s * (1.0 + x * (1.0 - s));
               });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input");
  }
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

namespace {

Tensor softmax_impl(const Tensor& a, std::size_t axis, bool log_space) {
  const char* name = log_space ? "log_softmax" : "softmax";
  const AxisView v = axis_view(name, a.shape(), axis);
  std::vector<double> out(a.numel());
  auto av = a.values();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < v.extent; ++e) mx = std::max(mx, av[base + e * v.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) z += std::exp(av[base + e * v.inner] - mx);
      const double lz = std::log(z) + mx;
      for (std::size_t e = 0; e < v.extent; ++e) {
        const double lp = av[base + e * v.inner] - lz;
        out[base + e * v.inner] = log_space ? lp : std::exp(lp);
      }
    }
  }
  return make_op_result(name, a.shape(), std::move(out), {a},
                        [v, log_space](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0];
                          auto ga = a.mutable_grad();
                          const auto& y = ctx.out_value;
                          const auto& g = ctx.out_grad;
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            for (std::size_t in = 0; in < v.inner; ++in) {
                              const std::size_t base = o * v.extent * v.inner + in;
                              double dot = 0.0;
                              for (std::size_t e = 0; e < v.extent; ++e) {
                                const std::size_t i = base + e * v.inner;
                                dot += log_space ? g[i] : g[i] * y[i];
                              }
                              for (std::size_t e = 0; e < v.extent; ++e) {
                                const std::size_t i = base + e * v.inner;
                                ga[i] += log_space ? g[i] - std::exp(y[i]) * dot
                                                   : y[i] * (g[i] - dot);
                              }
                            }
                          }
                        });
}

}  // namespace

Tensor softmax(const Tensor& a, std::size_t axis) { return softmax_impl(a, axis, false); }
Tensor log_softmax(const Tensor& a, std::size_t axis) { return softmax_impl(a, axis, true); }

// ---------------------------------------------------------------------------
// Normalization

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  if (x.rank() < 1) shape_fail("layer_norm", "scalar input");
  const std::size_t D = x.shape().back();
  if (gamma.numel() != D || beta.numel() != D) {
    shape_fail("layer_norm", "gamma/beta " + shape_str(gamma.shape()) + " for input " +
                                 shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / D;
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * D;
    double mu = 0.0;
    for (std::size_t d = 0; d < D; ++d) mu += row[d];
    mu /= static_cast<double>(D);
    double var = 0.0;
    for (std::size_t d = 0; d < D; ++d) var += (row[d] - mu) * (row[d] - mu);
    var /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t d = 0; d < D; ++d) {
      const double h = (row[d] - mu) * is;
      (*xhat)[r * D + d] = h;
      out[r * D + d] = gv[d] * h + bv[d];
    }
  }
  return make_op_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [=](const BackwardContext& ctx) {
        Tensor x = ctx.inputs[0], gamma = ctx.inputs[1], beta = ctx.inputs[2];
        const auto& g = ctx.out_grad;
        auto gv = gamma.values();
        if (gamma.requires_grad()) {
          auto gg = gamma.mutable_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t d = 0; d < D; ++d) gg[d] += g[r * D + d] * (*xhat)[r * D + d];
        }
        if (beta.requires_grad()) {
          auto gb = beta.mutable_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t d = 0; d < D; ++d) gb[d] += g[r * D + d];
        }
        if (x.requires_grad()) {
          auto gx = x.mutable_grad();
          const double invD = 1.0 / static_cast<double>(D);
          for (std::size_t r = 0; r < rows; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
              const double dy = g[r * D + d] * gv[d];
              m1 += dy;
              m2 += dy * (*xhat)[r * D + d];
            }
            m1 *= invD;
            m2 *= invD;
            for (std::size_t d = 0; d < D; ++d) {
              const double dy = g[r * D + d] * gv[d];
              gx[r * D + d] += (*inv_std)[r] * (dy - m1 - (*xhat)[r * D + d] * m2);
            }
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var, bool training,
                  double momentum, double eps) {
  require_rank("batch_norm", x, 2);
  const std::size_t L = x.dim(0), C = x.dim(1);
  if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
      running_var.numel() != C) {
    shape_fail("batch_norm", "channel parameters do not match input " + shape_str(x.shape()));
  }
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  std::vector<double> mean(C, 0.0), inv_std(C, 0.0);
  if (training) {
    std::vector<double> var(C, 0.0);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) mean[c] += xv[t * C + c];
    for (auto& m : mean) m /= static_cast<double>(L);
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const double d = xv[t * C + c] - mean[c];
        var[c] += d * d;
      }
    auto rm = running_mean.mutable_values();
    auto rv = running_var.mutable_values();
    for (std::size_t c = 0; c < C; ++c) {
      const double biased = var[c] / static_cast<double>(L);
      const double unbiased = L > 1 ? var[c] / static_cast<double>(L - 1) : biased;
      inv_std[c] = 1.0 / std::sqrt(biased + eps);
      rm[c] = (1.0 - momentum) * rm[c] + momentum * mean[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * unbiased;
    }
  } else {
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + eps);
    }
  }
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < C; ++c) {
      const double h = (xv[t * C + c] - mean[c]) * inv_std[c];
      (*xhat)[t * C + c] = h;
      out[t * C + c] = gv[c] * h + bv[c];
    }
  return make_op_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [=](const BackwardContext& ctx) {
        Tensor x = ctx.inputs[0], gamma = ctx.inputs[1], beta = ctx.inputs[2];
        const auto& g = ctx.out_grad;
        auto gv = gamma.values();
        if (gamma.requires_grad()) {
          auto gg = gamma.mutable_grad();
          for (std::size_t t = 0; t < L; ++t)
            for (std::size_t c = 0; c < C; ++c) gg[c] += g[t * C + c] * (*xhat)[t * C + c];
        }
        if (beta.requires_grad()) {
          auto gb = beta.mutable_grad();
          for (std::size_t t = 0; t < L; ++t)
            for (std::size_t c = 0; c < C; ++c) gb[c] += g[t * C + c];
        }
        if (!x.requires_grad()) return;
        auto gx = x.mutable_grad();
        if (!training) {
          for (std::size_t t = 0; t < L; ++t)
            for (std::size_t c = 0; c < C; ++c) gx[t * C + c] += g[t * C + c] * gv[c] * inv_std[c];
          return;
        }
        const double invL = 1.0 / static_cast<double>(L);
        for (std::size_t c = 0; c < C; ++c) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t t = 0; t < L; ++t) {
            const double dy = g[t * C + c] * gv[c];
            m1 += dy;
            m2 += dy * (*xhat)[t * C + c];
          }
          m1 *= invL;
          m2 *= invL;
          for (std::size_t t = 0; t < L; ++t) {
            const double dy = g[t * C + c] * gv[c];
            gx[t * C + c] += inv_std[c] * (dy - m1 - (*xhat)[t * C + c] * m2);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Attention

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k,
                                    const Tensor& v, std::size_t heads,
                                    bool causal, const Tensor& bias) {
  require_rank("attention", q, 2, "q");
  require_rank("attention", k, 2, "k");
  require_rank("attention", v, 2, "v");
  const std::size_t Lq = q.dim(0), D = q.dim(1), Lk = k.dim(0);
  if (k.dim(1) != D || v.dim(0) != Lk || v.dim(1) != D || heads == 0 || D % heads != 0) {
    shape_fail("attention", "q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                                ", v " + shape_str(v.shape()) + ", heads=" + std::to_string(heads));
  }
  if (bias.defined() && bias.shape() != Shape{heads, Lq, Lk}) {
    shape_fail("attention", "bias " + shape_str(bias.shape()) + " must be " +
                                shape_str({heads, Lq, Lk}));
  }
  if (causal && Lq != Lk) shape_fail("attention", "causal mask needs Lq == Lk");
  const std::size_t dk = D / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  const double* Q = q.values().data();
  const double* Kv = k.values().data();
  const double* V = v.values().data();
  const double* B = bias.defined() ? bias.values().data() : nullptr;
  auto probs = std::make_shared<std::vector<double>>(heads * Lq * Lk, 0.0);
  std::vector<double> out(Lq * D, 0.0);
  std::vector<double> row(Lk);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < Lq; ++i) {
      const std::size_t jmax = causal ? i + 1 : Lk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < jmax; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < dk; ++d) s += Q[i * D + h * dk + d] * Kv[j * D + h * dk + d];
        if (B) s += B[(h * Lq + i) * Lk + j];
        row[j] = s * sc;
        mx = std::max(mx, row[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < jmax; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      double* P = probs->data() + (h * Lq + i) * Lk;
      double* orow = out.data() + i * D + h * dk;
      for (std::size_t j = 0; j < jmax; ++j) {
        P[j] = row[j] / z;
        const double* vrow = V + j * D + h * dk;
        for (std::size_t d = 0; d < dk; ++d) orow[d] += P[j] * vrow[d];
      }
    }
  }
  return make_op_result(
      "attention", {Lq, D}, std::move(out), {q, k, v, bias},
      [=](const BackwardContext& ctx) {
        Tensor q = ctx.inputs[0], k = ctx.inputs[1], v = ctx.inputs[2], b = ctx.inputs[3];
        const double* G = ctx.out_grad.data();
        const double* Q = q.values().data();
        const double* Kv = k.values().data();
        const double* V = v.values().data();
        double* gq = q.requires_grad() ? q.mutable_grad().data() : nullptr;
        double* gk = k.requires_grad() ? k.mutable_grad().data() : nullptr;
        double* gv = v.requires_grad() ? v.mutable_grad().data() : nullptr;
        double* gb = (b.defined() && b.requires_grad()) ? b.mutable_grad().data() : nullptr;
        std::vector<double> gp(Lk);
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < Lq; ++i) {
            const std::size_t jmax = causal ? i + 1 : Lk;
            const double* P = probs->data() + (h * Lq + i) * Lk;
            const double* grow = G + i * D + h * dk;
            double dot = 0.0;
            for (std::size_t j = 0; j < jmax; ++j) {
              const double* vrow = V + j * D + h * dk;
              double s = 0.0;
              for (std::size_t d = 0; d < dk; ++d) s += grow[d] * vrow[d];
              gp[j] = s;
              dot += s * P[j];
              if (gv) {
                double* gvrow = gv + j * D + h * dk;
                for (std::size_t d = 0; d < dk; ++d) gvrow[d] += P[j] * grow[d];
              }
            }
            for (std::size_t j = 0; j < jmax; ++j) {
              const double gs = P[j] * (gp[j] - dot) * sc;
              if (gs == 0.0) continue;
              if (gb) gb[(h * Lq + i) * Lk + j] += gs;
              if (gq) {
                for (std::size_t d = 0; d < dk; ++d) gq[i * D + h * dk + d] += gs * Kv[j * D + h * dk + d];
              }
              if (gk) {
                for (std::size_t d = 0; d < dk; ++d) gk[j * D + h * dk + d] += gs * Q[i * D + h * dk + d];
              }
            }
          }
        }
      });
}

Tensor relative_position_scores(const Tensor& q, const Tensor& p,
                                std::size_t heads, std::size_t period) {
  require_rank("relative_position_scores", q, 2, "q");
  require_rank("relative_position_scores", p, 2, "p");
  const std::size_t L = q.dim(0), D = q.dim(1);
  const std::size_t P = period == 0 ? L : period;
  if (L % P != 0 || p.dim(0) != 2 * P - 1 || p.dim(1) != D || heads == 0 || D % heads != 0) {
    shape_fail("relative_position_scores",
               "q " + shape_str(q.shape()) + " and p " + shape_str(p.shape()) +
                   " (p needs 2P-1 rows, P=" + std::to_string(P) + " dividing L), heads=" +
                   std::to_string(heads));
  }
  const std::size_t dk = D / heads;
  const double* Q = q.values().data();
  const double* Pv = p.values().data();
  std::vector<double> out(heads * L * L);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) {
        const std::size_t r = j % P + P - 1 - i % P;
        double s = 0.0;
        for (std::size_t d = 0; d < dk; ++d) s += Q[i * D + h * dk + d] * Pv[r * D + h * dk + d];
        out[(h * L + i) * L + j] = s;
      }
  return make_op_result("relative_position_scores", {heads, L, L}, std::move(out), {q, p},
                        [=](const BackwardContext& ctx) {
                          Tensor q = ctx.inputs[0], p = ctx.inputs[1];
                          const double* Q = q.values().data();
                          const double* Pv = p.values().data();
                          double* gq = q.requires_grad() ? q.mutable_grad().data() : nullptr;
                          double* gp = p.requires_grad() ? p.mutable_grad().data() : nullptr;
                          for (std::size_t h = 0; h < heads; ++h)
                            for (std::size_t i = 0; i < L; ++i)
                              for (std::size_t j = 0; j < L; ++j) {
                                const double g = ctx.out_grad[(h * L + i) * L + j];
                                if (g == 0.0) continue;
                                const std::size_t r = j % P + P - 1 - i % P;
                                for (std::size_t d = 0; d < dk; ++d) {
                                  if (gq) gq[i * D + h * dk + d] += g * Pv[r * D + h * dk + d];
                                  if (gp) gp[r * D + h * dk + d] += g * Q[i * D + h * dk + d];
                                }
                              }
                        });
}

Tensor positional_encoding(std::size_t rows, std::size_t dim, double first) {
  if (rows == 0 || dim == 0) shape_fail("positional_encoding", "empty table");
  std::vector<double> out(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const double pos = first + static_cast<double>(r);
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      out[r * dim + i] = std::sin(pos * freq);
      if (i + 1 < dim) out[r * dim + i + 1] = std::cos(pos * freq);
    }
  }
  return Tensor({rows, dim}, std::move(out));
}

Tensor relative_positional_encoding(std::size_t length, std::size_t dim) {
  if (length == 0) shape_fail("relative_positional_encoding", "empty sequence");
  return positional_encoding(2 * length - 1, dim, -static_cast<double>(length - 1));
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::int64_t> ids) {
  require_rank("embedding_lookup", table, 2, "table");
  const std::size_t V = table.dim(0), D = table.dim(1);
  if (ids.empty()) shape_fail("embedding_lookup", "no ids");
  std::vector<double> out(ids.size() * D);
  auto tv = table.values();
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || static_cast<std::size_t>(ids[j]) >= V) {
      throw Error("vocab", "embedding_lookup: token id " + std::to_string(ids[j]) +
                               " outside vocabulary of " + std::to_string(V));
    }
    std::copy_n(tv.data() + ids[j] * D, D, out.data() + j * D);
  }
  std::vector<std::int64_t> idv(ids.begin(), ids.end());
  return make_op_result("embedding_lookup", {ids.size(), D}, std::move(out), {table},
                        [idv, D](const BackwardContext& ctx) {
                          Tensor table = ctx.inputs[0];
                          auto gt = table.mutable_grad();
                          for (std::size_t j = 0; j < idv.size(); ++j)
                            for (std::size_t d = 0; d < D; ++d) gt[idv[j] * D + d] += ctx.out_grad[j * D + d];
                        });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op_result("mean", {1}, {s / n}, {a}, [n](const BackwardContext& ctx) {
    Tensor a = ctx.inputs[0];
    auto ga = a.mutable_grad();
    for (auto& g : ga) g += ctx.out_grad[0] / n;
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const AxisView v = axis_view("mean", a.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis) out_shape.push_back(a.dim(i));
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(v.outer * v.inner, 0.0);
  auto av = a.values();
  const double n = static_cast<double>(v.extent);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t e = 0; e < v.extent; ++e)
      for (std::size_t in = 0; in < v.inner; ++in)
        out[o * v.inner + in] += av[(o * v.extent + e) * v.inner + in] / n;
  return make_op_result("mean_axis", out_shape, std::move(out), {a},
                        [v, n](const BackwardContext& ctx) {
                          Tensor a = ctx.inputs[0];
                          auto ga = a.mutable_grad();
                          for (std::size_t o = 0; o < v.outer; ++o)
                            for (std::size_t e = 0; e < v.extent; ++e)
                              for (std::size_t in = 0; in < v.inner; ++in)
                                ga[(o * v.extent + e) * v.inner + in] += ctx.out_grad[o * v.inner + in] / n;
                        });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_op_result("sum", {1}, {s}, {a}, [](const BackwardContext& ctx) {
    Tensor a = ctx.inputs[0];
    auto ga = a.mutable_grad();
    for (auto& g : ga) g += ctx.out_grad[0];
  });
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array kCatalog = {
    Op::kMatmul,    Op::kAdd,       Op::kHadamard,    Op::kScale,
    Op::kConcat,    Op::kSlice,     Op::kReshape,     Op::kTranspose,
    Op::kConv1d,    Op::kConv2d,    Op::kSigmoid,     Op::kRelu,
    Op::kSwish,     Op::kLog,       Op::kSoftmax,     Op::kLogSoftmax,
    Op::kLayerNorm, Op::kBatchNorm, Op::kAttention,   Op::kRelativePositionScores,
    Op::kPositionalEncoding, Op::kEmbeddingLookup, Op::kMean, Op::kSum,
};

const Tensor& input_at(std::span<const Tensor> in, std::size_t i, Op op) {
  if (i >= in.size()) {
    throw ShapeError(std::string(op_name(op)) + ": expected at least " +
                     std::to_string(i + 1) + " inputs, got " + std::to_string(in.size()));
  }
  return in[i];
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kHadamard: return "hadamard";
    case Op::kScale: return "scale";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kReshape: return "reshape";
    case Op::kTranspose: return "transpose";
    case Op::kConv1d: return "conv1d";
    case Op::kConv2d: return "conv2d";
    case Op::kSigmoid: return "sigmoid";
    case Op::kRelu: return "relu";
    case Op::kSwish: return "swish";
    case Op::kLog: return "log";
    case Op::kSoftmax: return "softmax";
    case Op::kLogSoftmax: return "log_softmax";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kBatchNorm: return "batch_norm";
    case Op::kAttention: return "scaled_dot_product_attention";
    case Op::kRelativePositionScores: return "relative_position_scores";
    case Op::kPositionalEncoding: return "positional_encoding";
    case Op::kEmbeddingLookup: return "embedding_lookup";
    case Op::kMean: return "mean";
    case Op::kSum: return "sum";
  }
  return "unknown";
}

std::span<const Op> op_catalog() { return kCatalog; }

Tensor op_apply(Op op, std::span<const Tensor> in, const OpAttrs& at) {
  auto opt = [&](std::size_t i) { return i < in.size() ? in[i] : Tensor{}; };
  switch (op) {
    case Op::kMatmul: return matmul(input_at(in, 0, op), input_at(in, 1, op));
    case Op::kAdd: return add(input_at(in, 0, op), input_at(in, 1, op));
    case Op::kHadamard: return hadamard(input_at(in, 0, op), input_at(in, 1, op));
    case Op::kScale: return scale(input_at(in, 0, op), at.factor);
    case Op::kConcat: return concat(in, at.axis);
    case Op::kSlice: return slice(input_at(in, 0, op), at.axis, at.start, at.length);
    case Op::kReshape: return reshape(input_at(in, 0, op), at.shape);
    case Op::kTranspose: return transpose(input_at(in, 0, op));
    case Op::kConv1d:
      return conv1d(input_at(in, 0, op), input_at(in, 1, op), opt(2), at.stride, at.padding,
                    at.groups);
    case Op::kConv2d:
      return conv2d(input_at(in, 0, op), input_at(in, 1, op), opt(2), at.stride, at.padding);
    case Op::kSigmoid: return sigmoid(input_at(in, 0, op));
    case Op::kRelu: return relu(input_at(in, 0, op));
    case Op::kSwish: return swish(input_at(in, 0, op));
    case Op::kLog: return log(input_at(in, 0, op));
    case Op::kSoftmax: return softmax(input_at(in, 0, op), at.axis);
    case Op::kLogSoftmax: return log_softmax(input_at(in, 0, op), at.axis);
    case Op::kLayerNorm:
      return layer_norm(input_at(in, 0, op), input_at(in, 1, op), input_at(in, 2, op), at.eps);
    case Op::kBatchNorm:
      if (!at.running_mean || !at.running_var) {
        throw ShapeError("batch_norm: running statistics are required");
      }
      return batch_norm(input_at(in, 0, op), input_at(in, 1, op), input_at(in, 2, op),
                        *at.running_mean, *at.running_var, at.training, at.momentum, at.eps);
    case Op::kAttention:
      return scaled_dot_product_attention(input_at(in, 0, op), input_at(in, 1, op),
                                          input_at(in, 2, op), at.heads, at.causal, opt(3));
    case Op::kRelativePositionScores:
      return relative_position_scores(input_at(in, 0, op), input_at(in, 1, op), at.heads);
    case Op::kPositionalEncoding: return positional_encoding(at.length, at.shape.empty() ? 0 : at.shape[0]);
    case Op::kEmbeddingLookup: return embedding_lookup(input_at(in, 0, op), at.ids);
    case Op::kMean:
      return at.reduce_all ? mean(input_at(in, 0, op)) : mean(input_at(in, 0, op), at.axis);
    case Op::kSum: return sum(input_at(in, 0, op));
  }
  throw ShapeError("op_apply: unknown op");
}

}  // namespace avrel::ops
