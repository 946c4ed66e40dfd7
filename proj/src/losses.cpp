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

#include "pyrseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pyrseg/error.hpp"
#include "pyrseg/ops.hpp"

namespace pyrseg::loss {

LossConfig LossConfig::from(const ModelConfig& cfg) {
  LossConfig l;
  l.lambda1 = cfg.lambda1;
  l.lambda2 = cfg.lambda2;
  l.duality_reduction = cfg.duality_reduction;
  l.beta_scope = cfg.beta_scope;
  return l;
}

void validate(const LossConfig& cfg) {
  if (cfg.lambda1 < 0 || cfg.lambda2 < 0) throw InvalidArgument("loss weights must be >= 0");
  if (!(cfg.clip_eps > 0 && cfg.clip_eps < 0.5)) throw InvalidArgument("clip_eps must be in (0, 0.5)");
}

namespace {

void require_nchw(const Tensor& t, const char* what) {
  if (t.rank() != 4) throw InvalidArgument(std::string(what) + " must be [N,K,H,W], got " + shape_str(t.shape()));
}

}  // namespace

Tensor mask_ce_loss(const Tensor& mask_prob, std::span<const std::uint8_t> labels, double clip_eps) {
  require_nchw(mask_prob, "mask_ce_loss: mask");
  const auto& s = mask_prob.shape();
  const std::size_t n = s[0], k = s[1], plane = s[2] * s[3];
  if (labels.size() != n * plane) {
    throw InvalidArgument("mask_ce_loss: " + std::to_string(labels.size()) + " labels for mask " + shape_str(s));
  }
  const auto m = mask_prob.values();
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t lab = labels[i * plane + p];
      if (lab == kIgnoreLabel) continue;
      if (lab >= k) {
        throw InvalidArgument("mask_ce_loss: label " + std::to_string(lab) + " >= class count " + std::to_string(k));
      }
      const double v = std::clamp(m[(i * k + lab) * plane + p], clip_eps, 1.0 - clip_eps);
      total -= std::log(v);
      ++counted;
    }
  }
  const double denom = counted ? static_cast<double>(counted) : 1.0;
  std::vector<std::uint8_t> lab_copy(labels.begin(), labels.end());
  return make_op_result({1}, {total / denom}, {mask_prob}, [=](std::span<const double> g) {
    auto gm = grad_sink(mask_prob);
    const auto mv = mask_prob.values();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::uint8_t lab = lab_copy[i * plane + p];
        if (lab == kIgnoreLabel) continue;
        const std::size_t idx = (i * k + lab) * plane + p;
        const double v = mv[idx];
        if (v > clip_eps && v < 1.0 - clip_eps) gm[idx] -= g[0] / (v * denom);
      }
    }
  });
}

Tensor duality_loss(const Tensor& spatial_grad, const Tensor& boundary_gt, DualityReduction reduction) {
  if (spatial_grad.shape() != boundary_gt.shape()) {
    throw InvalidArgument("duality_loss: derived boundary " + shape_str(spatial_grad.shape()) +
                          " does not match ground truth " + shape_str(boundary_gt.shape()));
  }
  Tensor diff = abs_diff(spatial_grad, boundary_gt);
  return reduction == DualityReduction::Sum ? sum(diff) : mean(diff);
}

Tensor balanced_bce_loss(const Tensor& fused, const Tensor& boundary_gt, BetaScope scope, double clip_eps) {
  require_nchw(fused, "balanced_bce_loss: prediction");
  if (fused.shape() != boundary_gt.shape()) {
    throw InvalidArgument("balanced_bce_loss: prediction " + shape_str(fused.shape()) +
                          " does not match ground truth " + shape_str(boundary_gt.shape()));
  }
  const auto& s = fused.shape();
  const std::size_t n = s[0], k = s[1], plane = s[2] * s[3];
  const auto y = boundary_gt.values();
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw InvalidArgument("balanced_bce_loss: ground truth must be binary");
  }

  // beta[c] = fraction of non-edge entries.
  std::vector<double> beta(k);
  {
    std::vector<double> edges(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c)
        for (std::size_t p = 0; p < plane; ++p) edges[c] += y[(i * k + c) * plane + p];
    if (scope == BetaScope::PerClassPerBatch) {
      for (std::size_t c = 0; c < k; ++c) beta[c] = 1.0 - edges[c] / static_cast<double>(n * plane);
    } else {
      double all = 0.0;
      for (double e : edges) all += e;
      std::fill(beta.begin(), beta.end(), 1.0 - all / static_cast<double>(n * k * plane));
    }
    for (auto& b : beta) b = std::clamp(b, clip_eps, 1.0 - clip_eps);
  }

  const double norm = static_cast<double>(n * plane);
  const auto yp = fused.values();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t idx = (i * k + c) * plane + p;
        const double v = std::clamp(yp[idx], clip_eps, 1.0 - clip_eps);
        total -= y[idx] == 1.0 ? beta[c] * std::log(v) : (1.0 - beta[c]) * std::log(1.0 - v);
      }
    }
  }
  return make_op_result({1}, {total / norm}, {fused, boundary_gt}, [=](std::span<const double> g) {
    auto gy = grad_sink(fused);
    if (gy.empty()) return;
    const auto pv = fused.values();
    const auto tv = boundary_gt.values();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t idx = (i * k + c) * plane + p;
          const double v = pv[idx];
          if (!(v > clip_eps && v < 1.0 - clip_eps)) continue;
          gy[idx] += tv[idx] == 1.0 ? -g[0] * beta[c] / (v * norm) : g[0] * (1.0 - beta[c]) / ((1.0 - v) * norm);
        }
      }
    }
  });
}

TotalLoss total_loss(const Tensor& mask_prob, const Tensor& spatial_grad, const Tensor& fused,
                     std::span<const std::uint8_t> labels, const Tensor& boundary_gt, const LossConfig& cfg) {
  validate(cfg);
  Tensor lm = mask_ce_loss(mask_prob, labels, cfg.clip_eps);
  Tensor ld = duality_loss(spatial_grad, boundary_gt, cfg.duality_reduction);
  TotalLoss out;
  out.breakdown.mask = lm.item();
  out.breakdown.duality = ld.item();
  if (fused.defined()) {
    Tensor le = balanced_bce_loss(fused, boundary_gt, cfg.beta_scope, cfg.clip_eps);
    out.breakdown.edge = le.item();
    out.value = weighted_sum({lm, ld, le}, {1.0, cfg.lambda1, cfg.lambda2});
  } else {
    out.value = weighted_sum({lm, ld}, {1.0, cfg.lambda1});
  }
  out.breakdown.total = out.value.item();
  return out;
}

double poly_lr(std::size_t iter, std::size_t max_iter, double base, double power) {
  if (max_iter == 0) throw InvalidArgument("poly_lr: max_iter must be > 0");
  if (iter > max_iter) {
    throw InvalidArgument("poly_lr: iter " + std::to_string(iter) + " exceeds max_iter " + std::to_string(max_iter));
  }
  return base * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

}  // namespace pyrseg::loss
