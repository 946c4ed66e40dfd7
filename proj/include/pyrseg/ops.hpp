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

#include "pyrseg/tensor.hpp"

namespace pyrseg {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// input [N,Cin,H,W], weight [Cout,Cin/groups,kh,kw], bias [Cout] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opt = {});

// Mean over a grid x grid partition of each channel. Patch i along an axis of
// length L spans [floor(i*L/grid), floor((i+1)*L/grid)); when grid > L the
// empty patches are widened to the single cell at their start index.
Tensor adaptive_avg_pool(const Tensor& input, std::size_t grid);

// Same-size k x k box filter averaging only in-bounds cells. k must be odd.
Tensor avg_pool_same(const Tensor& input, std::size_t kernel);

// Align-corners bilinear resize to a size at least as large as the input.
Tensor bilinear_upsample(const Tensor& input, std::size_t out_h, std::size_t out_w);

// Elementwise binary ops. b may have shape [N,C,1,1] against a of [N,C,H,W].
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// |a - b|; the subgradient at a == b is 0.
Tensor abs_diff(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// Softmax over axis 1 of an [N,C,H,W] tensor.
Tensor softmax_channels(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum_i weights[i] * scalars[i] over single-element tensors.
Tensor weighted_sum(const std::vector<Tensor>& scalars, const std::vector<double>& weights);

// Reverses the last axis.
Tensor flip_horizontal(const Tensor& x);

/// Per-channel normalization with learned scale and shift.
///
/// Training mode normalizes with the biased batch variance over N*H*W and
/// folds the batch statistics into the running estimates (unbiased variance);
/// eval mode normalizes with the running estimates.
struct NormState {
  Tensor gamma;         // [C], trainable
  Tensor beta;          // [C], trainable
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  double eps = 1e-5;
  double momentum = 0.1;

  static NormState create(std::size_t channels);
};

Tensor norm_affine(const Tensor& input, NormState& state, bool training);

// Batch-statistics normalization without running estimates.
Tensor norm_affine(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps);

}  // namespace pyrseg
