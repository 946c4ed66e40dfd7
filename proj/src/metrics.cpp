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

#include "pyrseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pyrseg/error.hpp"
#include "pyrseg/matching.hpp"
#include "pyrseg/parallel.hpp"

namespace pyrseg::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw InvalidArgument("ConfusionMatrix: classes must be >= 1");
}

void ConfusionMatrix::add(std::size_t gt_class, std::size_t pred_class, std::uint64_t n) {
  if (gt_class >= classes_ || pred_class >= classes_) {
    throw InvalidArgument("ConfusionMatrix: class pair (" + std::to_string(gt_class) + ", " +
                          std::to_string(pred_class) + ") out of range");
  }
  counts_[gt_class * classes_ + pred_class] += n;
}

void ConfusionMatrix::add(const data::LabelMask& gt, const data::LabelMask& pred) {
  if (gt.height != pred.height || gt.width != pred.width) {
    throw InvalidArgument("ConfusionMatrix: mask sizes differ");
  }
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (gt.data[i] == data::kIgnoreLabel) continue;
    add(gt.data[i], pred.data[i]);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw InvalidArgument("ConfusionMatrix: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

namespace {

ClassScores finish(std::vector<std::optional<double>> per_class) {
  ClassScores s{std::move(per_class), 0.0};
  double total = 0;
  std::size_t n = 0;
  for (const auto& v : s.per_class) {
    if (!v) continue;
    total += *v;
    ++n;
  }
  s.mean = n ? total / static_cast<double>(n) : 0.0;
  return s;
}

}  // namespace

ClassScores miou(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes();
  std::vector<std::optional<double>> iou(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += cm.at(i, j);
      col += cm.at(j, i);
    }
    const std::uint64_t uni = row + col - cm.at(i, i);
    if (uni == 0) continue;
    iou[i] = static_cast<double>(cm.at(i, i)) / static_cast<double>(uni);
  }
  return finish(std::move(iou));
}

ProbMap nms_thin(const ProbMap& prob) {
  const std::size_t h = prob.height, w = prob.width;
  ProbMap out = prob;
  if (h == 0 || w == 0) return out;
  auto at = [&](long y, long x) {
    y = std::clamp(y, 0L, static_cast<long>(h) - 1);
    x = std::clamp(x, 0L, static_cast<long>(w) - 1);
    return prob(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  auto sample = [&](double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    const long y0 = static_cast<long>(std::floor(y)), x0 = static_cast<long>(std::floor(x));
    const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
           fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
  };
  for (std::size_t yy = 0; yy < h; ++yy) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      const long y = static_cast<long>(yy), x = static_cast<long>(xx);
      const double gy = (at(y + 1, x) - at(y - 1, x)) / 2.0;
      const double gx = (at(y, x + 1) - at(y, x - 1)) / 2.0;
      const double norm = std::hypot(gy, gx);
      if (norm == 0.0) continue;
      const double dy = gy / norm, dx = gx / norm;
      const double v = prob(yy, xx);
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      if (v < sample(fy + dy, fx + dx) || v < sample(fy - dy, fx - dx)) out(yy, xx) = 0.0;
    }
  }
  return out;
}

double MatchTolerance::radius(std::size_t height, std::size_t width) const {
  if (!(fraction >= 0)) throw InvalidArgument("MatchTolerance: fraction must be >= 0");
  return fraction * std::hypot(static_cast<double>(height), static_cast<double>(width));
}

MatchCounts& MatchCounts::operator+=(const MatchCounts& o) {
  tp_pred += o.tp_pred;
  n_pred += o.n_pred;
  tp_gt += o.tp_gt;
  n_gt += o.n_gt;
  return *this;
}

MatchCounts match_boundaries(const BinaryMap& pred, const BinaryMap& gt, double radius) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw InvalidArgument("match_boundaries: map sizes differ (" + std::to_string(pred.height) + "x" +
                          std::to_string(pred.width) + " vs " + std::to_string(gt.height) + "x" +
                          std::to_string(gt.width) + ")");
  }
  if (!(radius >= 0)) throw InvalidArgument("match_boundaries: radius must be >= 0");
  const std::size_t h = gt.height, w = gt.width;
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> gt_index(h * w, kNone);
  std::size_t n_gt = 0;
  for (std::size_t i = 0; i < h * w; ++i)
    if (gt.data[i]) gt_index[i] = n_gt++;

  const long r = static_cast<long>(std::floor(radius));
  const double r2 = radius * radius;
  std::vector<std::pair<long, long>> offsets;
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx)
      if (static_cast<double>(dy * dy + dx * dx) <= r2) offsets.emplace_back(dy, dx);

  std::vector<std::vector<std::size_t>> adj;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!pred(y, x)) continue;
      auto& row = adj.emplace_back();
      for (auto [dy, dx] : offsets) {
        const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
        if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
        const auto j = gt_index[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
        if (j != kNone) row.push_back(j);
      }
    }
  }
  const std::size_t n_pred = adj.size();
  const std::size_t matched = max_bipartite_matching(n_pred, n_gt, std::move(adj));
  return {matched, n_pred, matched, n_gt};
}

MatchCounts match_boundaries(const BinaryMap& pred, const BinaryMap& gt, const MatchTolerance& tol) {
  return match_boundaries(pred, gt, tol.radius(gt.height, gt.width));
}

std::vector<double> default_thresholds() {
  std::vector<double> t(99);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i + 1) / 100.0;
  return t;
}

ImageCounts evaluate_image(const std::vector<ProbMap>& pred, const std::vector<BinaryMap>& gt,
                           const BoundaryEvalOptions& opt) {
  if (pred.size() != gt.size()) {
    throw InvalidArgument("evaluate_image: " + std::to_string(pred.size()) + " predicted maps vs " +
                          std::to_string(gt.size()) + " gt maps");
  }
  ImageCounts out;
  out.counts.resize(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const ProbMap p = opt.nms ? nms_thin(pred[k]) : pred[k];
    if (p.height != gt[k].height || p.width != gt[k].width) {
      throw InvalidArgument("evaluate_image: class " + std::to_string(k) + " map sizes differ");
    }
    const double radius = opt.tolerance.radius(p.height, p.width);
    for (double t : opt.thresholds) {
      BinaryMap b(p.height, p.width);
      for (std::size_t i = 0; i < p.data.size(); ++i) b.data[i] = p.data[i] >= t ? 1 : 0;
      out.counts[k].push_back(match_boundaries(b, gt[k], radius));
    }
  }
  return out;
}

PRAccumulator::PRAccumulator(std::size_t classes, std::vector<double> thresholds)
    : classes_(classes), thresholds_(std::move(thresholds)), counts_(classes_ * thresholds_.size()) {
  if (thresholds_.empty()) throw InvalidArgument("PRAccumulator: no thresholds");
}

void PRAccumulator::add(const ImageCounts& image) {
  if (image.counts.size() != classes_) throw InvalidArgument("PRAccumulator: class count differs");
  for (std::size_t k = 0; k < classes_; ++k) {
    if (image.counts[k].size() != thresholds_.size()) throw InvalidArgument("PRAccumulator: threshold count differs");
    for (std::size_t t = 0; t < thresholds_.size(); ++t) counts_[k * thresholds_.size() + t] += image.counts[k][t];
  }
  ++images_;
}

void PRAccumulator::merge(const PRAccumulator& other) {
  if (other.classes_ != classes_ || other.thresholds_ != thresholds_) {
    throw InvalidArgument("PRAccumulator: cannot merge accumulators with different layouts");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  images_ += other.images_;
}

std::vector<PRPoint> pr_curve(const PRAccumulator& acc, std::size_t k) {
  std::vector<PRPoint> out;
  for (std::size_t t = 0; t < acc.thresholds().size(); ++t) {
    const auto& c = acc.at(k, t);
    const double p = c.n_pred ? static_cast<double>(c.tp_pred) / static_cast<double>(c.n_pred) : 0.0;
    const double r = c.n_gt ? static_cast<double>(c.tp_gt) / static_cast<double>(c.n_gt) : 0.0;
    out.push_back({acc.thresholds()[t], p, r});
  }
  return out;
}

namespace {

void require_populated(const PRAccumulator& acc, const char* who) {
  if (acc.empty()) throw InvalidState(std::string(who) + ": accumulator holds no images");
}

bool has_gt(const PRAccumulator& acc, std::size_t k) { return acc.at(k, 0).n_gt > 0; }

}  // namespace

ClassScores mf_ods(const PRAccumulator& acc) {
  require_populated(acc, "mf_ods");
  std::vector<std::optional<double>> per(acc.classes());
  for (std::size_t k = 0; k < acc.classes(); ++k) {
    if (!has_gt(acc, k)) continue;
    double best = 0.0;
    for (const auto& pt : pr_curve(acc, k)) {
      const double s = pt.precision + pt.recall;
      best = std::max(best, s > 0 ? 2 * pt.precision * pt.recall / s : 0.0);
    }
    per[k] = best;
  }
  return finish(std::move(per));
}

double area_under_pr(std::vector<std::pair<double, double>> pts) {
  if (pts.empty()) return 0.0;
  std::sort(pts.begin(), pts.end());
  pts.insert(pts.begin(), {0.0, pts.front().second});
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  return area;
}

ClassScores average_precision(const PRAccumulator& acc) {
  require_populated(acc, "average_precision");
  std::vector<std::optional<double>> per(acc.classes());
  for (std::size_t k = 0; k < acc.classes(); ++k) {
    if (!has_gt(acc, k)) continue;
    std::vector<std::pair<double, double>> pts;
    const auto curve = pr_curve(acc, k);
    for (std::size_t t = 0; t < curve.size(); ++t)
      if (acc.at(k, t).n_pred > 0) pts.emplace_back(curve[t].recall, curve[t].precision);
    per[k] = area_under_pr(std::move(pts));
  }
  return finish(std::move(per));
}

PRAccumulator evaluate_boundaries(const std::vector<std::vector<ProbMap>>& pred,
                                  const std::vector<std::vector<BinaryMap>>& gt, const BoundaryEvalOptions& opt) {
  if (pred.size() != gt.size()) throw InvalidArgument("evaluate_boundaries: image counts differ");
  if (pred.empty()) throw InvalidArgument("evaluate_boundaries: no images");
  std::vector<ImageCounts> per_image(pred.size());
  parallel_for(pred.size(), [&](std::size_t i) { per_image[i] = evaluate_image(pred[i], gt[i], opt); });
  PRAccumulator acc(gt.front().size(), opt.thresholds);
  for (const auto& c : per_image) acc.add(c);
  return acc;
}

ConfusionMatrix evaluate_segmentation(const std::vector<data::LabelMask>& gt, const std::vector<data::LabelMask>& pred,
                                      std::size_t classes) {
  if (gt.size() != pred.size()) throw InvalidArgument("evaluate_segmentation: image counts differ");
  std::vector<ConfusionMatrix> per(gt.size(), ConfusionMatrix(classes));
  parallel_for(gt.size(), [&](std::size_t i) { per[i].add(gt[i], pred[i]); });
  ConfusionMatrix cm(classes);
  for (const auto& c : per) cm.merge(c);
  return cm;
}

}  // namespace pyrseg::metrics
