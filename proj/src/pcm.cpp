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

#include "pyrseg/pcm.hpp"

#include <string>

#include "pyrseg/error.hpp"

namespace pyrseg::model {

std::size_t StreamState::last_step() const {
  if (step_maps.empty()) throw InvalidState("stream has no feature maps");
  return step_maps.rbegin()->first;
}

const LevelMaps& StreamState::latest() const {
  if (step_maps.empty()) throw InvalidState("stream has no feature maps");
  return step_maps.rbegin()->second;
}

PcmParams::PcmParams(std::size_t channels, std::size_t num_steps, std::vector<std::size_t> grid_list, Rng& rng)
    : grids(std::move(grid_list)) {
  steps.reserve(num_steps);
  for (std::size_t s = 0; s < num_steps; ++s) {
    StepParams sp{ConvReluNorm::create(channels, channels, 1, rng), {}};
    for (std::size_t t = 1; t < kLevels; ++t) {
      sp.contexts[t].resize(t + 1);
      for (std::size_t src = 0; src <= t; ++src) {
        for (auto g : grids) {
          sp.contexts[t][src].push_back({g, ConvLayer::create(channels, channels, g, g, {}, rng)});
        }
      }
    }
    steps.push_back(std::move(sp));
  }
}

void PcmParams::collect(NamedTensors& params, NamedTensors& buffers, const std::string& prefix) const {
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const auto sp = prefix + ".step" + std::to_string(s + 1);
    params.add_conv(sp + ".level0.conv", steps[s].level0.conv);
    params.add_norm_params(sp + ".level0.norm", steps[s].level0.norm);
    buffers.add_norm_buffers(sp + ".level0.norm", steps[s].level0.norm);
    for (std::size_t t = 1; t < kLevels; ++t) {
      for (std::size_t src = 0; src <= t; ++src) {
        for (const auto& cc : steps[s].contexts[t][src]) {
          params.add_conv(sp + ".level" + std::to_string(t) + ".src" + std::to_string(src) + ".grid" +
                              std::to_string(cc.grid),
                          cc.conv);
        }
      }
    }
  }
}

Tensor patch_context(const Tensor& feature, std::size_t grid, const ConvLayer& conv) {
  if (grid < 1) throw InvalidArgument("patch_context: grid must be >= 1");
  const auto& ws = conv.weight.shape();
  if (ws.size() != 4 || ws[2] != grid || ws[3] != grid) {
    throw InvalidArgument("patch_context: conv weight " + shape_str(ws) + " is not a " + std::to_string(grid) +
                          "x" + std::to_string(grid) + " kernel");
  }
  return conv2d(adaptive_avg_pool(feature, grid), conv.weight, conv.bias, {1, 0, 1});
}

Tensor context_vector(const Tensor& source, std::span<const ContextConv> convs) {
  Tensor ctx = adaptive_avg_pool(source, 1);
  for (const auto& cc : convs) ctx = add(ctx, patch_context(source, cc.grid, cc.conv));
  return ctx;
}

Tensor refine_level(const Tensor& input, std::span<const Tensor> contexts, std::size_t level) {
  if (contexts.size() != level + 1) {
    throw InvalidArgument("refine_level at level " + std::to_string(level) + " needs " +
                          std::to_string(level + 1) + " contexts, got " + std::to_string(contexts.size()));
  }
  Tensor out = input;
  for (const auto& ctx : contexts) out = add(out, mul(input, ctx));
  return out;
}

Task step_owner(std::size_t s, StepParity parity) {
  const bool odd = s % 2 == 1;
  if (parity == StepParity::BoundaryOdd) return odd ? Task::Boundary : Task::Segmentation;
  return odd ? Task::Segmentation : Task::Boundary;
}

LevelMaps step_forward(StepParams& params, const LevelMaps& own_prev, const LevelMaps& other_prev, bool training) {
  LevelMaps out;
  out[0] = params.level0(own_prev[0], training);
  for (std::size_t t = 1; t < kLevels; ++t) {
    std::vector<Tensor> contexts;
    contexts.reserve(t + 1);
    for (std::size_t src = 0; src <= t; ++src) {
      contexts.push_back(context_vector(other_prev[src], params.contexts[t][src]));
    }
    out[t] = refine_level(own_prev[t], contexts, t);
  }
  return out;
}

Streams run_schedule(const PyramidFeatures& pyramid, PcmParams& params, std::size_t steps, StepParity parity,
                     bool training) {
  if (steps < 1) throw InvalidArgument("run_schedule: steps must be >= 1");
  if (steps > params.steps.size()) {
    throw InvalidArgument("run_schedule: " + std::to_string(steps) + " steps requested but parameters exist for " +
                          std::to_string(params.steps.size()));
  }
  Streams st;
  st.segmentation.task = Task::Segmentation;
  st.boundary.task = Task::Boundary;
  st.segmentation.step_maps[0] = pyramid.levels;
  st.boundary.step_maps[0] = pyramid.levels;
  for (std::size_t s = 1; s <= steps; ++s) {
    const bool bnd = step_owner(s, parity) == Task::Boundary;
    StreamState& own = bnd ? st.boundary : st.segmentation;
    StreamState& other = bnd ? st.segmentation : st.boundary;
    const LevelMaps& own_prev = s <= 2 ? own.step_maps.at(0) : own.step_maps.at(s - 2);
    const LevelMaps& other_prev = s == 1 ? other.step_maps.at(0) : other.step_maps.at(s - 1);
    own.step_maps[s] = step_forward(params.steps[s - 1], own_prev, other_prev, training);
  }
  return st;
}

}  // namespace pyrseg::model
