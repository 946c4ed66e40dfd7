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

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pyrseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

// Reverse-mode tape callback. Receives the gradient flowing into the op's
// output and accumulates into the inputs it captured (see grad_sink).
using BackwardFn = std::function<void(std::span<const double> grad_out)>;

/// Dense row-major array of doubles with an optional autograd record.
///
/// Tensor is a shared handle: copies alias the same storage and graph node.
/// Use clone() for an independent copy of the values.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  // Direct write access. Only valid on tensors that are not part of a
  // recorded graph (leaves or detached results).
  std::span<double> mutable_values();

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  // Gradient buffer; empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  // Backpropagate from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;
  Tensor reshape(Shape shape) const;

  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_result(Shape, std::vector<double>, const std::vector<Tensor>&, BackwardFn);
  friend std::span<double> grad_sink(const Tensor&);
};

// Builds an op output. The backward rule is recorded only when grad mode is
// on and at least one input requires a gradient.
Tensor make_op_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                      BackwardFn backward);

// Mutable gradient buffer of an op input, allocated on first use. Empty span
// when the tensor does not take part in differentiation.
std::span<double> grad_sink(const Tensor& t);

bool grad_mode_enabled() noexcept;

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace pyrseg
