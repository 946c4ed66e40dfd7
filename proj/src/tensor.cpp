// Copyright 2026 The pyrseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pyrseg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "pyrseg/error.hpp"

namespace pyrseg {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  // Empty for leaves.
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
};

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_mode_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
  node_->values.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw InvalidArgument("tensor shape " + shape_str(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->values = std::move(values);
}

static detail::Node& require(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw InvalidState("use of an undefined tensor");
  return *node;
}

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw InvalidArgument("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return require(node_).values.size(); }

std::span<const double> Tensor::values() const { return require(node_).values; }

std::span<double> Tensor::mutable_values() { return require(node_).values; }

double Tensor::item() const {
  if (numel() != 1) {
    throw InvalidArgument("item() needs a single-element tensor, got " + shape_str(shape()));
  }
  return node_->values[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw InvalidArgument("index rank does not match " + shape_str(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw InvalidArgument("index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->values[flat];
}

bool Tensor::requires_grad() const { return require(node_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  auto& n = require(node_);
  if (!n.is_leaf()) throw InvalidState("requires_grad can only be set on leaf tensors");
  n.requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return !require(node_).grad.empty(); }

std::span<const double> Tensor::grad() const { return require(node_).grad; }

void Tensor::zero_grad() { require(node_).grad.clear(); }

void Tensor::backward() const {
  auto& root = require(node_);
  if (root.values.size() != 1) {
    throw InvalidArgument("backward() needs a scalar loss, got shape " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;

  // Iterative post-order DFS yields a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->values.size(), 0.0);
  }
  if (root.grad.empty()) root.grad.assign(1, 0.0);
  root.grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->is_leaf()) n->backward(n->grad);
  }
}

Tensor Tensor::detach() const {
  auto& n = require(node_);
  return Tensor(n.shape, n.values);
}

Tensor Tensor::clone() const { return detach(); }

Tensor Tensor::reshape(Shape new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw InvalidArgument("cannot reshape " + shape_str(shape()) + " to " + shape_str(new_shape));
  }
  Tensor self = *this;
  return make_op_result(std::move(new_shape), node_->values, {self},
                        [self](std::span<const double> g) {
                          auto gs = grad_sink(self);
                          if (gs.empty()) return;
                          for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
                        });
}

Tensor make_op_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                      BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!t_grad_enabled) return out;
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!needs) return out;
  auto& n = *out.node_;
  n.requires_grad = true;
  n.backward = std::move(backward);
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) n.parents.push_back(t.node_);
  }
  return out;
}

std::span<double> grad_sink(const Tensor& t) {
  if (!t.defined()) return {};
  auto& n = *t.node_;
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
  return n.grad;
}

}  // namespace pyrseg
