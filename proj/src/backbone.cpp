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

#include "pyrseg/backbone.hpp"

#include <string>

#include "pyrseg/error.hpp"

namespace pyrseg::model {

namespace {

std::array<ConvNormRelu, 4> make_stages(std::size_t c, Rng& rng) {
  return {ConvNormRelu::create(c, 3, 2, rng), ConvNormRelu::create(2 * c, c, 2, rng),
          ConvNormRelu::create(2 * c, 2 * c, 2, rng), ConvNormRelu::create(2 * c, 2 * c, 2, rng)};
}

}  // namespace

Backbone::Backbone(std::size_t channels, Rng& rng)
    : stages_(make_stages(channels, rng)),
      reduce_{ConvReluNorm::create(channels, 2 * channels, 1, rng),
              ConvReluNorm::create(channels, 2 * channels, 1, rng),
              ConvReluNorm::create(channels, 2 * channels, 1, rng)} {}

PyramidFeatures Backbone::encode(const Tensor& image, bool training) {
  const auto& s = image.shape();
  if (s.size() != 4 || s[1] != 3) {
    throw InvalidArgument("encode expects an [N,3,H,W] image, got " + shape_str(s));
  }
  if (s[2] % kInputDivisor != 0 || s[3] % kInputDivisor != 0 || s[2] == 0 || s[3] == 0) {
    throw InvalidArgument("encode: image height and width must be divisible by " +
                          std::to_string(kInputDivisor) + ", got " + std::to_string(s[2]) + "x" +
                          std::to_string(s[3]));
  }
  Tensor x1 = stages_[0](image, training);  // 1/2
  Tensor x2 = stages_[1](x1, training);     // 1/4
  Tensor x3 = stages_[2](x2, training);     // 1/8
  Tensor x4 = stages_[3](x3, training);     // 1/16
  PyramidFeatures out;
  out.levels[0] = reduce_[0](x4, training);
  out.levels[1] = reduce_[1](x3, training);
  out.levels[2] = reduce_[2](x2, training);
  return out;
}

void Backbone::collect(NamedTensors& params, NamedTensors& buffers, const std::string& prefix) const {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const auto p = prefix + ".stage" + std::to_string(i);
    params.add_conv(p + ".conv", stages_[i].conv);
    params.add_norm_params(p + ".norm", stages_[i].norm);
    buffers.add_norm_buffers(p + ".norm", stages_[i].norm);
  }
  for (std::size_t t = 0; t < reduce_.size(); ++t) {
    const auto p = prefix + ".reduce" + std::to_string(t);
    params.add_conv(p + ".conv", reduce_[t].conv);
    params.add_norm_params(p + ".norm", reduce_[t].norm);
    buffers.add_norm_buffers(p + ".norm", reduce_[t].norm);
  }
}

}  // namespace pyrseg::model
