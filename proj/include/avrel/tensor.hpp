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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "avrel/common.hpp"

namespace avrel {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {
struct Node;
}

// What a backward closure sees: the forward output and its gradient, plus
// the op inputs in the order they were recorded.
struct BackwardContext {
  std::span<const double> out_value;
  std::span<const double> out_grad;
  const std::vector<Tensor>& inputs;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

// Dense row-major double tensor with optional participation in a
// reverse-mode tape. Copies are shallow: two Tensor handles may refer to the
// same storage and the same graph node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // In-place access to storage. Only meaningful for leaves (parameters,
  // inputs); mutating an interior node does not re-run the graph.
  std::span<double> mutable_values();
  double value(std::size_t flat_index) const { return values()[flat_index]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  // Gradient buffer, allocated as zeros on first access.
  std::span<double> mutable_grad();
  void zero_grad();

  // Value copy detached from any graph.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(const char* op, Shape shape,
                               std::vector<double> values,
                               std::vector<Tensor> inputs, BackwardFn backward);
  friend void backward(const Tensor& loss);
};

// Creates the output of an op. When gradients are enabled and any input
// requires grad, the result is recorded on the tape with `backward`.
Tensor make_op_result(const char* op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, BackwardFn backward);

// Populates grad on every reachable leaf that requires grad. Gradients
// accumulate into existing buffers.
void backward(const Tensor& loss);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for scalar-valued `f` at `x`.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps = 1e-6);

// Same check with respect to a set of leaves that `f` closes over. Each
// tensor is perturbed in place and restored.
double grad_check_leaves(const std::function<Tensor()>& f,
                         std::span<Tensor> leaves, double eps = 1e-6);

// ---------------------------------------------------------------------------
// Parameters and checkpoints

struct Parameter {
  std::string name;
  Tensor tensor;
  std::string init_spec;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Owns the learnable parameters of a model plus non-learnable buffers
// (batch-norm running statistics).
class ParameterSet {
 public:
  // uniform(+-1/sqrt(fan_in)) when init is "uniform_fan_in"; "zeros"; "ones".
  Tensor add(const std::string& name, Shape shape, const std::string& init,
             std::size_t fan_in, Rng& rng);
  Tensor add_buffer(const std::string& name, Shape shape, double fill);

  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  std::span<const NamedTensor> buffers() const { return buffers_; }

  std::size_t parameter_count() const;
  void zero_grad();

  std::vector<NamedTensor> named_tensors() const;
  void load(std::span<const NamedTensor> tensors);

 private:
  void check_unique(const std::string& name) const;
  std::vector<Parameter> params_;
  std::vector<NamedTensor> buffers_;
};

std::string encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path,
                     std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace avrel
