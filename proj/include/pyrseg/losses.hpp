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
#include <cstdint>
#include <span>

#include "pyrseg/config.hpp"
#include "pyrseg/tensor.hpp"

namespace pyrseg::loss {

inline constexpr std::uint8_t kIgnoreLabel = 255;

struct LossConfig {
  double lambda1 = 1.0;
  double lambda2 = 1000.0;
  double clip_eps = 1e-7;
  DualityReduction duality_reduction = DualityReduction::Mean;
  BetaScope beta_scope = BetaScope::PerClassPerBatch;

  static LossConfig from(const ModelConfig& cfg);
};

void validate(const LossConfig& cfg);

// Mean over non-ignored pixels of -log(clip(M[label])). labels holds N*H*W
// class ids in row-major [N,H,W] order.
Tensor mask_ce_loss(const Tensor& mask_prob, std::span<const std::uint8_t> labels, double clip_eps = 1e-7);

// L1 distance between the derived boundary and the boundary ground truth.
Tensor duality_loss(const Tensor& spatial_grad, const Tensor& boundary_gt,
                    DualityReduction reduction = DualityReduction::Mean);

// Class-balanced binary cross-entropy normalized by N*H*W. beta is the
// non-edge fraction of boundary_gt, clamped to [clip_eps, 1 - clip_eps].
Tensor balanced_bce_loss(const Tensor& fused, const Tensor& boundary_gt,
                         BetaScope scope = BetaScope::PerClassPerBatch, double clip_eps = 1e-7);

struct LossBreakdown {
  double mask = 0.0;
  double duality = 0.0;
  double edge = 0.0;
  double total = 0.0;
};

struct TotalLoss {
  Tensor value;
  LossBreakdown breakdown;
};

// L_M + lambda1 * L_D + lambda2 * L_E. An undefined `fused` drops L_E.
TotalLoss total_loss(const Tensor& mask_prob, const Tensor& spatial_grad, const Tensor& fused,
                     std::span<const std::uint8_t> labels, const Tensor& boundary_gt, const LossConfig& cfg);

// base * (1 - iter / max_iter)^power.
double poly_lr(std::size_t iter, std::size_t max_iter, double base = 0.001, double power = 0.9);

}  // namespace pyrseg::loss
