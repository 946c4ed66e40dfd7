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
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace pyrseg {

enum class StepParity { BoundaryOdd, SegOdd };
enum class DualityReduction { Sum, Mean };
enum class BetaScope { PerClassPerBatch, GlobalPerBatch };

/// Every knob of the model, the objective, the optimizer and evaluation.
///
/// Defaults: grids {1,3,5,7}; k = 3; lambda1 = 1, lambda2 = 1000; poly LR
/// with base 0.001 and power 0.9; momentum 0.9, weight decay 1e-4; matching
/// tolerance 0.00375 of the image diagonal. Channel count, epochs, batch
/// size and image size are desk-scale values.
struct ModelConfig {
  std::size_t classes = 4;
  std::size_t channels = 16;
  std::size_t steps = 4;
  std::vector<std::size_t> grids{1, 3, 5, 7};
  std::size_t spatial_gradient_k = 3;
  double lambda1 = 1.0;
  double lambda2 = 1000.0;
  double base_lr = 0.001;
  double power = 0.9;
  double momentum = 0.9;
  double weight_decay = 0.0001;
  std::size_t epochs = 60;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  StepParity step_parity = StepParity::BoundaryOdd;
  DualityReduction duality_reduction = DualityReduction::Mean;
  BetaScope beta_scope = BetaScope::PerClassPerBatch;
  bool eval_nms = false;
  double tolerance_fraction = 0.00375;
  // When false the boundary head, fusion and boundary loss are skipped.
  bool boundary_head = true;

  bool operator==(const ModelConfig&) const = default;
};

// Throws ValidationError naming the offending field.
void validate(const ModelConfig& cfg);

nlohmann::json to_json(const ModelConfig& cfg);
// Strict: unknown keys, wrong types and out-of-range values are rejected.
ModelConfig config_from_json(const nlohmann::json& j);

ModelConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ModelConfig& cfg);

// JSON schema describing the accepted config document.
nlohmann::json config_schema();

std::string to_string(StepParity p);
std::string to_string(DualityReduction r);
std::string to_string(BetaScope s);

}  // namespace pyrseg
