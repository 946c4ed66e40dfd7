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

#include <filesystem>

#include "pyrseg/backbone.hpp"
#include "pyrseg/boundary_fusion.hpp"
#include "pyrseg/config.hpp"
#include "pyrseg/pcm.hpp"

namespace pyrseg::model {

struct ModelOutputs {
  Tensor mask_logits;    // [N,K,H,W], before softmax
  Tensor mask_prob;      // M
  Tensor spatial_grad;   // dM
  Tensor boundary_prob;  // B; undefined when the boundary head is off
  Tensor fused;          // Y; undefined when the boundary head is off
};

/// Encoder + iterative context module + segmentation and boundary heads.
///
/// Heads are 1x1 convs to K channels on level 2 of each stream's last step,
/// upsampled (align corners) to the input size; softmax gives M, sigmoid
/// gives B. Y fuses B with the spatial gradient of M.
class JointModel {
 public:
  explicit JointModel(const ModelConfig& cfg);

  ModelOutputs forward(const Tensor& image, bool training);

  // Runs the pipeline up to the context module (exposed for inspection).
  Streams forward_streams(const Tensor& image, bool training);

  NamedTensors parameters() const;
  NamedTensors buffers() const;
  const ModelConfig& config() const { return cfg_; }

  /// Checkpoint directory: config.json, index.json (ordered tensor names)
  /// and one tensor file per parameter and running statistic.
  void save(const std::filesystem::path& dir) const;
  static JointModel load(const std::filesystem::path& dir);

 private:
  ModelOutputs heads(const Streams& streams, std::size_t out_h, std::size_t out_w);

  ModelConfig cfg_;
  Rng rng_;
  Backbone backbone_;
  PcmParams pcm_;
  ConvLayer seg_head_;
  ConvLayer bnd_head_;
  FusionParams fusion_;
};

}  // namespace pyrseg::model
