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

#include "pyrseg/optim.hpp"

#include <string>

#include "pyrseg/error.hpp"

namespace pyrseg {

void sgd_update(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
                double lr, const SgdOptions& opt) {
  if (lr < 0) throw InvalidArgument("sgd: learning rate must be >= 0");
  if (grad.size() != param.size() || velocity.size() != param.size()) {
    throw InvalidArgument("sgd: parameter has " + std::to_string(param.size()) + " values but gradient has " +
                          std::to_string(grad.size()) + " and velocity " + std::to_string(velocity.size()));
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = opt.momentum * velocity[i] + grad[i] + opt.weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, SgdOptions opt)
    : params_(std::move(params)), opt_(opt) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdOptimizer::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (p.has_grad()) {
      sgd_update(p.mutable_values(), p.grad(), velocity_[i], lr, opt_);
    } else {
      std::vector<double> zeros(p.numel(), 0.0);
      sgd_update(p.mutable_values(), zeros, velocity_[i], lr, opt_);
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace pyrseg
