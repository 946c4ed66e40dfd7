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
#include <optional>
#include <vector>

#include "pyrseg/data.hpp"
#include "pyrseg/grid.hpp"

namespace pyrseg::metrics {

/// counts(i, j) = pixels of true class i predicted as j. Pixels whose gt is
/// the ignore label are skipped.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  void add(const data::LabelMask& gt, const data::LabelMask& pred);
  void add(std::size_t gt_class, std::size_t pred_class, std::uint64_t n = 1);
  void merge(const ConfusionMatrix& other);

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t i, std::size_t j) const { return counts_[i * classes_ + j]; }
  std::uint64_t total() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

// Per-class scores; nullopt marks a class excluded from the mean.
struct ClassScores {
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;  // 0 when every class is excluded
};

// IoU_i = t_ii / (T_i + sum_j t_ji - t_ii); classes with an empty union are excluded.
ClassScores miou(const ConfusionMatrix& cm);

/// Suppresses pixels that are not local maxima across the edge. The edge
/// normal comes from central differences (border indices clamped); a pixel
/// survives iff its value is >= both bilinear samples one pixel away along
/// the +/- normal. Zero gradient keeps the pixel.
ProbMap nms_thin(const ProbMap& prob);

struct MatchTolerance {
  double fraction = 0.00375;

  // fraction * sqrt(H^2 + W^2)
  double radius(std::size_t height, std::size_t width) const;
};

struct MatchCounts {
  std::uint64_t tp_pred = 0;
  std::uint64_t n_pred = 0;
  std::uint64_t tp_gt = 0;
  std::uint64_t n_gt = 0;

  MatchCounts& operator+=(const MatchCounts& o);
  bool operator==(const MatchCounts&) const = default;
};

// One-to-one matching of predicted to gt pixels within Euclidean distance radius.
MatchCounts match_boundaries(const BinaryMap& pred, const BinaryMap& gt, double radius);
MatchCounts match_boundaries(const BinaryMap& pred, const BinaryMap& gt, const MatchTolerance& tol);

// Thresholds 0.01, 0.02, ..., 0.99.
std::vector<double> default_thresholds();

/// Per-image counts, indexed [class][threshold]. A pixel is predicted at
/// threshold t when its probability is >= t.
struct ImageCounts {
  std::vector<std::vector<MatchCounts>> counts;
};

struct BoundaryEvalOptions {
  MatchTolerance tolerance;
  bool nms = false;
  std::vector<double> thresholds = default_thresholds();
};

ImageCounts evaluate_image(const std::vector<ProbMap>& pred, const std::vector<BinaryMap>& gt,
                           const BoundaryEvalOptions& opt);

/// Dataset-level sums of ImageCounts.
class PRAccumulator {
 public:
  PRAccumulator(std::size_t classes, std::vector<double> thresholds = default_thresholds());

  void add(const ImageCounts& image);
  void merge(const PRAccumulator& other);

  std::size_t classes() const { return classes_; }
  const std::vector<double>& thresholds() const { return thresholds_; }
  std::size_t images() const { return images_; }
  bool empty() const { return images_ == 0; }
  const MatchCounts& at(std::size_t k, std::size_t t) const { return counts_[k * thresholds_.size() + t]; }

  bool operator==(const PRAccumulator&) const = default;

 private:
  std::size_t classes_;
  std::vector<double> thresholds_;
  std::vector<MatchCounts> counts_;
  std::size_t images_ = 0;
};

struct PRPoint {
  double threshold;
  double precision;
  double recall;
};

// Dataset-aggregated precision/recall per threshold for class k.
std::vector<PRPoint> pr_curve(const PRAccumulator& acc, std::size_t k);

// F = 2PR/(P+R), 0/0 -> 0; max over thresholds. Classes without gt pixels are excluded.
ClassScores mf_ods(const PRAccumulator& acc);

// Trapezoid area under the PR curve sorted by recall, with (0, P_first) prepended.
// Thresholds with no predicted pixels contribute no point.
ClassScores average_precision(const PRAccumulator& acc);

// Trapezoid area for explicit (recall, precision) points.
double area_under_pr(std::vector<std::pair<double, double>> recall_precision);

/// Evaluates images in parallel and reduces in image order, so the result
/// does not depend on the worker count.
PRAccumulator evaluate_boundaries(const std::vector<std::vector<ProbMap>>& pred,
                                  const std::vector<std::vector<BinaryMap>>& gt, const BoundaryEvalOptions& opt);

ConfusionMatrix evaluate_segmentation(const std::vector<data::LabelMask>& gt, const std::vector<data::LabelMask>& pred,
                                      std::size_t classes);

}  // namespace pyrseg::metrics
