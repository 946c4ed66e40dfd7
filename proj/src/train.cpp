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

#include "pyrseg/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "pyrseg/error.hpp"
#include "pyrseg/ops.hpp"
#include "pyrseg/optim.hpp"

namespace pyrseg::train {

namespace fs = std::filesystem;

std::size_t iterations_per_epoch(std::size_t samples, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("iterations_per_epoch: batch_size must be >= 1");
  return (samples + batch_size - 1) / batch_size;
}

namespace {

std::string csv_row(const IterationRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", r.iter, r.lr, r.loss.mask, r.loss.duality,
                r.loss.edge, r.loss.total);
  return buf;
}

}  // namespace

TrainResult train(model::JointModel& model, const std::vector<data::SampleRecord>& samples, const TrainOptions& opt) {
  const auto& cfg = model.config();
  if (samples.empty()) throw InvalidArgument("train: no samples");
  for (const auto& s : samples) {
    if (s.boundaries.classes != cfg.classes) {
      throw ValidationError("train: sample '" + s.id + "' has " + std::to_string(s.boundaries.classes) +
                            " boundary classes, config expects " + std::to_string(cfg.classes));
    }
  }
  const std::size_t per_epoch = iterations_per_epoch(samples.size(), cfg.batch_size);
  const std::size_t max_iter = per_epoch * cfg.epochs;
  const auto loss_cfg = loss::LossConfig::from(cfg);

  std::vector<Tensor> params;
  for (auto& [name, t] : model.parameters().items) params.push_back(t);
  SgdOptimizer optim(std::move(params), SgdOptions{cfg.momentum, cfg.weight_decay});

  std::ofstream csv;
  if (!opt.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec || !fs::is_directory(opt.out_dir)) throw IoError("cannot create output directory " + opt.out_dir.string());
    csv.open(opt.out_dir / "loss.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (opt.out_dir / "loss.csv").string());
    csv << kLossCsvHeader << '\n';
  }

  // Separate stream from model initialization.
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xFFFFFFFFu), static_cast<std::uint32_t>(cfg.seed >> 32),
                    0x5eedu};
  std::mt19937_64 rng(seq);
  std::bernoulli_distribution coin(0.5);

  TrainResult result;
  std::vector<std::size_t> order(samples.size());
  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < per_epoch; ++b, ++iter) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(lo + cfg.batch_size, samples.size());
      std::vector<data::SampleRecord> flipped;
      flipped.reserve(hi - lo);
      std::vector<const data::SampleRecord*> batch;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& s = samples[order[i]];
        if (opt.random_flip && coin(rng)) {
          flipped.push_back(data::flip_sample(s));
          batch.push_back(&flipped.back());
        } else {
          batch.push_back(&s);
        }
      }
      const auto input = data::make_batch(batch);

      IterationRecord rec;
      rec.iter = iter;
      rec.epoch = epoch;
      rec.lr = loss::poly_lr(iter, max_iter > 1 ? max_iter - 1 : 1, cfg.base_lr, cfg.power);

      optim.zero_grad();
      auto out = model.forward(input.images, true);
      auto total = loss::total_loss(out.mask_prob, out.spatial_grad, out.fused, input.labels, input.boundaries,
                                    loss_cfg);
      total.value.backward();
      optim.step(rec.lr);

      rec.loss = total.breakdown;
      if (csv.is_open()) csv << csv_row(rec) << '\n';
      if (opt.on_iteration) opt.on_iteration(rec);
      result.history.push_back(rec);
    }
    if (!opt.out_dir.empty()) {
      csv.flush();
      model.save(opt.out_dir / "checkpoint");
    }
  }
  if (csv.is_open() && !csv) throw IoError("failed writing " + (opt.out_dir / "loss.csv").string());
  return result;
}

namespace {

std::vector<ProbMap> planes(std::span<const double> v, std::size_t n, std::size_t k, std::size_t h, std::size_t w) {
  std::vector<ProbMap> out;
  for (std::size_t c = 0; c < k; ++c) {
    ProbMap m(h, w);
    const auto* src = v.data() + (n * k + c) * h * w;
    std::copy(src, src + h * w, m.data.begin());
    out.push_back(std::move(m));
  }
  return out;
}

struct RawOutputs {
  Tensor mask_prob, gradient, fused;
};

RawOutputs run(model::JointModel& model, const Tensor& images) {
  auto out = model.forward(images, false);
  return {out.mask_prob, out.spatial_grad, out.fused};
}

// (a + flip(b)) / 2
Tensor average_mirrored(const Tensor& a, const Tensor& b) { return scale(add(a, flip_horizontal(b)), 0.5); }

}  // namespace

std::vector<Prediction> predict(model::JointModel& model, const std::vector<Tensor>& images, bool flip) {
  constexpr std::size_t kChunk = 8;
  NoGradGuard no_grad;
  std::vector<Prediction> preds;
  for (std::size_t lo = 0; lo < images.size(); lo += kChunk) {
    const std::size_t hi = std::min(lo + kChunk, images.size());
    const Shape& s0 = images[lo].shape();
    if (s0.size() != 3 || s0[0] != 3) throw InvalidArgument("predict: expected [3,H,W] images, got " + shape_str(s0));
    std::vector<double> v;
    for (std::size_t i = lo; i < hi; ++i) {
      if (images[i].shape() != s0) throw InvalidArgument("predict: images in a chunk must share a size");
      auto iv = images[i].values();
      v.insert(v.end(), iv.begin(), iv.end());
    }
    const std::size_t n = hi - lo, h = s0[1], w = s0[2];
    const Tensor batch({n, 3, h, w}, std::move(v));
    auto out = run(model, batch);
    if (flip) {
      auto mirrored = run(model, flip_horizontal(batch));
      out.mask_prob = average_mirrored(out.mask_prob, mirrored.mask_prob);
      out.gradient = average_mirrored(out.gradient, mirrored.gradient);
      if (out.fused.defined()) out.fused = average_mirrored(out.fused, mirrored.fused);
    }
    const std::size_t k = model.config().classes;
    for (std::size_t i = 0; i < n; ++i) {
      Prediction p;
      p.mask_prob = planes(out.mask_prob.values(), i, k, h, w);
      p.gradient = planes(out.gradient.values(), i, k, h, w);
      if (out.fused.defined()) p.boundary = planes(out.fused.values(), i, k, h, w);
      p.mask = data::LabelMask(h, w, 0);
      for (std::size_t q = 0; q < h * w; ++q) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < k; ++c)
          if (p.mask_prob[c].data[q] > p.mask_prob[best].data[q]) best = c;
        p.mask.data[q] = static_cast<std::uint8_t>(best);
      }
      preds.push_back(std::move(p));
    }
  }
  return preds;
}

Prediction predict(model::JointModel& model, const Tensor& image, bool flip) {
  return std::move(predict(model, std::vector<Tensor>{image}, flip).front());
}

std::vector<BinaryMap> gt_maps(const data::BoundaryLabels& b) {
  std::vector<BinaryMap> out;
  for (std::size_t k = 0; k < b.classes; ++k) out.push_back(b.channel(k));
  return out;
}

EvalReport evaluate(model::JointModel& model, const std::vector<data::SampleRecord>& samples,
                    const metrics::BoundaryEvalOptions& opt, bool flip) {
  if (samples.empty()) throw InvalidArgument("evaluate: no samples");
  std::vector<Tensor> images;
  for (const auto& s : samples) images.push_back(s.image);
  const auto preds = predict(model, images, flip);

  const std::size_t k = model.config().classes;
  metrics::ConfusionMatrix cm(k);
  std::vector<std::vector<ProbMap>> fused, grads;
  std::vector<std::vector<BinaryMap>> gts;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    cm.add(samples[i].mask, preds[i].mask);
    grads.push_back(preds[i].gradient);
    if (!preds[i].boundary.empty()) fused.push_back(preds[i].boundary);
    gts.push_back(gt_maps(samples[i].boundaries));
  }
  EvalReport r;
  r.miou = metrics::miou(cm);
  r.mf_gradient = metrics::mf_ods(metrics::evaluate_boundaries(grads, gts, opt));
  if (!fused.empty()) {
    const auto acc = metrics::evaluate_boundaries(fused, gts, opt);
    r.mf_boundary = metrics::mf_ods(acc);
    r.ap_boundary = metrics::average_precision(acc);
  }
  return r;
}

}  // namespace pyrseg::train
