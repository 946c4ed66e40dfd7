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

#include <array>
#include <cstddef>

#include "pyrseg/layers.hpp"

namespace pyrseg::model {

inline constexpr std::size_t kLevels = 3;
inline constexpr std::size_t kInputDivisor = 16;

/// Feature pyramid. Level 0 is at 1/16 of the input, level 1 at 1/8 and
/// level 2 at 1/4; every level carries the same channel count.
struct PyramidFeatures {
  std::array<Tensor, kLevels> levels;
};

/// Tiny stand-in encoder: four stride-2 (conv3x3, norm, relu) stages of
/// widths (C, 2C, 2C, 2C). Stages 2..4 are tapped and reduced to C channels
/// by a 3x3 conv + relu + norm.
class Backbone {
 public:
  Backbone(std::size_t channels, Rng& rng);

  PyramidFeatures encode(const Tensor& image, bool training);
  void collect(NamedTensors& params, NamedTensors& buffers, const std::string& prefix) const;

 private:
  std::array<ConvNormRelu, 4> stages_;
  std::array<ConvReluNorm, kLevels> reduce_;
};

}  // namespace pyrseg::model
