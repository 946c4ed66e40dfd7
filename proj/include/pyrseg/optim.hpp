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

#include <span>
#include <vector>

#include "pyrseg/tensor.hpp"

namespace pyrseg {

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 0.0001;
};

// velocity = momentum * velocity + grad + weight_decay * param
// param   -= lr * velocity
void sgd_update(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
                double lr, const SgdOptions& opt);

/// Momentum SGD over a fixed, ordered parameter list.
///
/// Parameters without an accumulated gradient are treated as having a zero
/// gradient (weight decay and momentum still apply).
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, SgdOptions opt);

  void step(double lr);
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  SgdOptions opt_;
};

}  // namespace pyrseg
