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

#include "pyrseg/layers.hpp"

namespace pyrseg::model {

// |M - avg_pool_same(M, k)| per class: a soft boundary derived from a mask
// probability map.
Tensor spatial_gradient(const Tensor& mask_prob, std::size_t k = 3);

// Interleaves two [N,K,H,W] maps into [N,2K,H,W]: channel 2c is b[c],
// channel 2c+1 is dm[c].
Tensor sliced_concat(const Tensor& b, const Tensor& dm);

/// K-grouped 1x1 conv over the sliced concatenation; group k sees only the
/// pair (B_k, dM_k).
struct FusionParams {
  ConvLayer conv;  // weight [K, 2, 1, 1], groups = K

  static FusionParams create(std::size_t classes, Rng& rng);
};

// Grouped conv output before the final sigmoid.
Tensor fuse_logits(const Tensor& b, const Tensor& dm, const FusionParams& params);
// Y = sigmoid(fuse_logits(...)).
Tensor fuse(const Tensor& b, const Tensor& dm, const FusionParams& params);

}  // namespace pyrseg::model
