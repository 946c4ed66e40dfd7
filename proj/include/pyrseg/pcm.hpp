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
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "pyrseg/backbone.hpp"
#include "pyrseg/config.hpp"

namespace pyrseg::model {

enum class Task { Segmentation, Boundary };

using LevelMaps = std::array<Tensor, kLevels>;

/// One task's feature maps F_s^t. Step 0 is the shared pyramid; the other
/// entries are the steps this stream owns.
struct StreamState {
  Task task = Task::Segmentation;
  std::map<std::size_t, LevelMaps> step_maps;

  std::size_t last_step() const;
  const LevelMaps& latest() const;
};

// G x G convolution that collapses a pooled G x G grid to a C-vector.
struct ContextConv {
  std::size_t grid = 1;
  ConvLayer conv;
};

struct StepParams {
  ConvReluNorm level0;
  // contexts[t][t'] holds one ContextConv per grid for target level t >= 1
  // and source level t' <= t. contexts[0] is unused.
  std::array<std::vector<std::vector<ContextConv>>, kLevels> contexts;
};

/// Per-step parameters of the iterative context module (no sharing across
/// steps).
struct PcmParams {
  std::vector<std::size_t> grids;
  std::vector<StepParams> steps;  // steps[s - 1]

  PcmParams(std::size_t channels, std::size_t num_steps, std::vector<std::size_t> grids, Rng& rng);
  void collect(NamedTensors& params, NamedTensors& buffers, const std::string& prefix) const;
};

// adaptive_avg_pool to grid x grid followed by the unpadded grid x grid conv.
// Returns [N,C,1,1].
Tensor patch_context(const Tensor& feature, std::size_t grid, const ConvLayer& conv);

// global_mean(source) + sum over grids of patch_context(source, G).
Tensor context_vector(const Tensor& source, std::span<const ContextConv> convs);

// input + sum_i input * contexts[i]; expects level + 1 contexts of [N,C,1,1].
Tensor refine_level(const Tensor& input, std::span<const Tensor> contexts, std::size_t level);

// Owner of step s (s >= 1) under the given parity.
Task step_owner(std::size_t s, StepParity parity);

// One step: level 0 is conv+relu+norm of own_prev[0]; level t >= 1 refines
// own_prev[t] with contexts drawn from other_prev[0..t].
LevelMaps step_forward(StepParams& params, const LevelMaps& own_prev, const LevelMaps& other_prev,
                       bool training);

struct Streams {
  StreamState segmentation;
  StreamState boundary;
};

Streams run_schedule(const PyramidFeatures& pyramid, PcmParams& params, std::size_t steps, StepParity parity,
                     bool training);

}  // namespace pyrseg::model
