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

#include "pyrseg/boundary_fusion.hpp"

#include <string>

#include "pyrseg/error.hpp"

namespace pyrseg::model {

Tensor spatial_gradient(const Tensor& mask_prob, std::size_t k) {
  return abs_diff(mask_prob, avg_pool_same(mask_prob, k));
}

Tensor sliced_concat(const Tensor& b, const Tensor& dm) {
  const auto& s = b.shape();
  if (s.size() != 4 || s != dm.shape()) {
    throw InvalidArgument("sliced_concat: shapes " + shape_str(s) + " and " + shape_str(dm.shape()) +
                          " must be equal rank-4 shapes");
  }
  const std::size_t n = s[0], k = s[1], plane = s[2] * s[3];
  const auto bv = b.values();
  const auto dv = dm.values();
  std::vector<double> out(2 * b.numel());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t src = (i * k + c) * plane;
      const std::size_t even = (i * 2 * k + 2 * c) * plane;
      const std::size_t odd = even + plane;
      for (std::size_t p = 0; p < plane; ++p) {
        out[even + p] = bv[src + p];
        out[odd + p] = dv[src + p];
      }
    }
  }
  return make_op_result({n, 2 * k, s[2], s[3]}, std::move(out), {b, dm}, [=](std::span<const double> g) {
    auto gb = grad_sink(b);
    auto gd = grad_sink(dm);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t src = (i * k + c) * plane;
        const std::size_t even = (i * 2 * k + 2 * c) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          if (!gb.empty()) gb[src + p] += g[even + p];
          if (!gd.empty()) gd[src + p] += g[even + plane + p];
        }
      }
    }
  });
}

FusionParams FusionParams::create(std::size_t classes, Rng& rng) {
  return {ConvLayer::create(classes, 2 * classes, 1, 1, {1, 0, classes}, rng)};
}

Tensor fuse_logits(const Tensor& b, const Tensor& dm, const FusionParams& params) {
  const auto& ws = params.conv.weight.shape();
  const std::size_t k = b.rank() == 4 ? b.dim(1) : 0;
  if (ws != Shape{k, 2, 1, 1} || params.conv.options.groups != k) {
    throw InvalidArgument("fuse: fusion conv " + shape_str(ws) + " is not a " + std::to_string(k) +
                          "-grouped 1x1 conv over " + std::to_string(2 * k) + " channels");
  }
  return params.conv(sliced_concat(b, dm));
}

Tensor fuse(const Tensor& b, const Tensor& dm, const FusionParams& params) {
  return sigmoid(fuse_logits(b, dm, params));
}

}  // namespace pyrseg::model
