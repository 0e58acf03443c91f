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

#include "avrel/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace avrel {

namespace detail {

struct Node {
  const char* op = "leaf";
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<Tensor> inputs;
  BackwardFn backward;
};

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_seq = 0;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
  node_->seq = ++g_seq;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value),
                requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return node_ ? node_->shape : kEmpty;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for " + shape_str(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!node_) return {};
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) return {};
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (node_) node_->requires_grad = on;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  return Tensor(node_->shape, node_->value, false);
}

Tensor make_op_result(const char* op, Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs, BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value in output " +
                         shape_str(shape));
    }
  }
  Tensor out(std::move(shape), std::move(values), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) {
    return t.requires_grad();
  });
  if (!any) return out;
  out.node_->op = op;
  out.node_->requires_grad = true;
  out.node_->inputs = std::move(inputs);
  out.node_->backward = std::move(backward);
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw Error("autograd", "backward: loss does not depend on any tensor "
                            "that requires grad");
  }
  // Collect the interior of the graph; creation order is a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node_.get()};
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    if (!n->backward) continue;
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in.requires_grad()) stack.push_back(in.node_.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) {
              return a->seq > b->seq;
            });
  auto* root = loss.node_.get();
  if (root->grad.empty()) root->grad.assign(1, 0.0);
  root->grad[0] += 1.0;
  for (auto* n : order) {
    if (n->grad.empty()) continue;
    BackwardContext ctx{n->value, n->grad, n->inputs};
    n->backward(ctx);
    if (n != root) {
      // Interior gradients are not needed once propagated.
      std::vector<double>().swap(n->grad);
    }
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------

namespace {

double checked_scalar(const Tensor& t) {
  const double v = t.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite value");
  return v;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("eps", "grad_check: eps must be > 0");
  Tensor leaf(x.shape(), std::vector<double>(x.values().begin(), x.values().end()),
              true);
  std::vector<Tensor> leaves{leaf};
  return grad_check_leaves([&] { return f(leaf); }, leaves, eps);
}

double grad_check_leaves(const std::function<Tensor()>& f,
                         std::span<Tensor> leaves, double eps) {
  if (!(eps > 0.0)) throw ConfigError("eps", "grad_check: eps must be > 0");
  for (auto& t : leaves) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tensor out = f();
    checked_scalar(out);
    backward(out);
  }
  double worst = 0.0;
  NoGradGuard guard;
  for (auto& t : leaves) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) {
      auto g = t.grad();
      analytic.assign(g.begin(), g.end());
    }
    for (double a : analytic) {
      if (!std::isfinite(a)) throw NumericError("grad_check: non-finite gradient");
    }
    auto vals = t.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double fp = checked_scalar(f());
      vals[i] = orig - eps;
      const double fm = checked_scalar(f());
      vals[i] = orig;
      worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2 * eps)));
    }
  }
  return worst;
}

}  // namespace avrel
