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
#include <filesystem>
#include <functional>
#include <vector>

#include "pyrseg/data.hpp"
#include "pyrseg/losses.hpp"
#include "pyrseg/metrics.hpp"
#include "pyrseg/model.hpp"

namespace pyrseg::train {

struct IterationRecord {
  std::size_t iter = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  loss::LossBreakdown loss;
};

struct TrainOptions {
  // Empty: no checkpoint or loss CSV is written.
  std::filesystem::path out_dir;
  bool random_flip = true;
  std::function<void(const IterationRecord&)> on_iteration;
};

struct TrainResult {
  std::vector<IterationRecord> history;
};

/// Iterations per epoch = ceil(samples / batch_size); the schedule runs
/// poly_lr(i, max_iter - 1) so the first step uses base_lr and the last 0.
/// Each epoch reshuffles with a generator seeded from the config seed and
/// flips every sample with probability 0.5. With an out_dir the loss CSV is
/// written there and the checkpoint is rewritten to out_dir/checkpoint after
/// every epoch.
TrainResult train(model::JointModel& model, const std::vector<data::SampleRecord>& samples,
                  const TrainOptions& opt = {});

std::size_t iterations_per_epoch(std::size_t samples, std::size_t batch_size);

inline constexpr const char* kLossCsvHeader = "iter,lr,L_M,L_D,L_E,total";

struct Prediction {
  data::LabelMask mask;             // argmax of M, lowest index on ties
  std::vector<ProbMap> mask_prob;   // M per class
  std::vector<ProbMap> gradient;    // dM per class
  std::vector<ProbMap> boundary;    // Y per class; empty without the boundary head
};

// Eval-mode inference on [3,H,W] images without gradient tracking. With
// flip the outputs for the image and its mirror (mirrored back) are averaged.
std::vector<Prediction> predict(model::JointModel& model, const std::vector<Tensor>& images, bool flip = false);
Prediction predict(model::JointModel& model, const Tensor& image, bool flip = false);

struct EvalReport {
  metrics::ClassScores miou;
  metrics::ClassScores mf_boundary;  // MF(ODS) of Y
  metrics::ClassScores ap_boundary;
  metrics::ClassScores mf_gradient;  // MF(ODS) of dM
};

// Evaluation of a model on labelled samples; boundary scores are skipped
// (left empty) when the model has no boundary head.
EvalReport evaluate(model::JointModel& model, const std::vector<data::SampleRecord>& samples,
                    const metrics::BoundaryEvalOptions& opt, bool flip = false);

std::vector<BinaryMap> gt_maps(const data::BoundaryLabels& b);

}  // namespace pyrseg::train
