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
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pyrseg/ops.hpp"

namespace pyrseg {

using Rng = std::mt19937_64;

struct ConvLayer {
  Tensor weight;  // [Cout, Cin/groups, kh, kw]
  Tensor bias;    // [Cout]
  Conv2dOptions options;

  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), bias 0.
  static ConvLayer create(std::size_t cout, std::size_t cin, std::size_t kh, std::size_t kw, Conv2dOptions opt,
                          Rng& rng);

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, options); }
};

// 3x3 conv (padding 1) -> relu -> norm: pyramid reductions and level 0 of
// the context module.
struct ConvReluNorm {
  ConvLayer conv;
  NormState norm;

  static ConvReluNorm create(std::size_t cout, std::size_t cin, std::size_t stride, Rng& rng);
  Tensor operator()(const Tensor& x, bool training);
};

// 3x3 conv (padding 1) -> norm -> relu: encoder stages.
struct ConvNormRelu {
  ConvLayer conv;
  NormState norm;

  static ConvNormRelu create(std::size_t cout, std::size_t cin, std::size_t stride, Rng& rng);
  Tensor operator()(const Tensor& x, bool training);
};

/// Ordered name -> tensor registry used for checkpoints and the optimizer.
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(std::string name, const Tensor& t) { items.emplace_back(std::move(name), t); }
  void add_conv(const std::string& prefix, const ConvLayer& c);
  void add_norm_params(const std::string& prefix, const NormState& n);
  void add_norm_buffers(const std::string& prefix, const NormState& n);
  std::vector<Tensor> tensors() const;
};

}  // namespace pyrseg
