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

#include "pyrseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "pyrseg/error.hpp"
#include "pyrseg/ops.hpp"

namespace pyrseg::data {

BinaryMap BoundaryLabels::channel(std::size_t k) const {
  if (k >= classes) throw InvalidArgument("boundary channel " + std::to_string(k) + " out of range");
  BinaryMap m(height, width);
  std::copy_n(bits.begin() + static_cast<std::ptrdiff_t>(k * height * width), height * width, m.data.begin());
  return m;
}

Tensor BoundaryLabels::to_tensor() const {
  std::vector<double> v(bits.begin(), bits.end());
  return Tensor({classes, height, width}, std::move(v));
}

BoundaryLabels gt_boundary_from_labels(const LabelMask& mask, std::size_t classes, std::size_t radius) {
  if (radius < 1) throw InvalidArgument("gt_boundary_from_labels: radius must be >= 1");
  const std::size_t h = mask.height, w = mask.width;
  for (auto v : mask.data) {
    if (v != kIgnoreLabel && v >= classes) {
      throw InvalidArgument("gt_boundary_from_labels: label " + std::to_string(v) + " >= class count " +
                            std::to_string(classes));
    }
  }
  BoundaryLabels out(classes, h, w);
  const long r = static_cast<long>(radius);
  std::vector<std::uint8_t> present(classes);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (mask(y, x) == kIgnoreLabel) continue;
      std::fill(present.begin(), present.end(), 0);
      std::size_t distinct = 0;
      const long y0 = std::max(0L, static_cast<long>(y) - r), y1 = std::min(static_cast<long>(h) - 1, static_cast<long>(y) + r);
      const long x0 = std::max(0L, static_cast<long>(x) - r), x1 = std::min(static_cast<long>(w) - 1, static_cast<long>(x) + r);
      for (long yy = y0; yy <= y1; ++yy) {
        for (long xx = x0; xx <= x1; ++xx) {
          const auto v = mask(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
          if (v == kIgnoreLabel || present[v]) continue;
          present[v] = 1;
          ++distinct;
        }
      }
      if (distinct < 2) continue;
      for (std::size_t k = 0; k < classes; ++k)
        if (present[k]) out.at(k, y, x) = 1;
    }
  }
  return out;
}

std::array<double, 3> class_color(std::size_t cls, std::size_t classes) {
  if (cls == 0) return {0.15, 0.15, 0.15};
  // Evenly spaced hues at full saturation for the foreground classes.
  const double hue = static_cast<double>(cls - 1) / static_cast<double>(std::max<std::size_t>(classes - 1, 1));
  const double v = 0.9, s = 0.85;
  const double hh = hue * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

namespace {

using SampleRng = std::mt19937_64;

std::size_t uniform(SampleRng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void paint_rectangle(LabelMask& m, std::uint8_t cls, SampleRng& rng) {
  const std::size_t s = m.height;
  const std::size_t rh = uniform(rng, s / 5, s / 2), rw = uniform(rng, s / 5, s / 2);
  const std::size_t y0 = uniform(rng, 0, s - rh), x0 = uniform(rng, 0, s - rw);
  for (std::size_t y = y0; y < y0 + rh; ++y)
    for (std::size_t x = x0; x < x0 + rw; ++x) m(y, x) = cls;
}

void paint_circle(LabelMask& m, std::uint8_t cls, SampleRng& rng) {
  const std::size_t s = m.height;
  const std::size_t r = uniform(rng, std::max<std::size_t>(s / 10, 2), std::max<std::size_t>(s / 5, 3));
  const double cy = static_cast<double>(uniform(rng, r, s - r));
  const double cx = static_cast<double>(uniform(rng, r, s - r));
  const double rr = static_cast<double>(r) * static_cast<double>(r);
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
      if (dy * dy + dx * dx <= rr) m(y, x) = cls;
    }
  }
}

void paint_triangle(LabelMask& m, std::uint8_t cls, SampleRng& rng) {
  const std::size_t s = m.height;
  const std::size_t box = uniform(rng, s / 4, s / 2);
  const double oy = static_cast<double>(uniform(rng, 0, s - box));
  const double ox = static_cast<double>(uniform(rng, 0, s - box));
  std::uniform_real_distribution<double> u(0.0, static_cast<double>(box));
  double py[3], px[3];
  const double min_area = 0.15 * static_cast<double>(box * box);
  for (int attempt = 0;; ++attempt) {
    for (int i = 0; i < 3; ++i) {
      py[i] = oy + u(rng);
      px[i] = ox + u(rng);
    }
    const double area = 0.5 * std::abs((px[1] - px[0]) * (py[2] - py[0]) - (px[2] - px[0]) * (py[1] - py[0]));
    if (area >= min_area || attempt >= 32) break;
  }
  auto edge = [&](int a, int b, double y, double x) {
    return (px[b] - px[a]) * (y - py[a]) - (py[b] - py[a]) * (x - px[a]);
  };
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const double cy = static_cast<double>(y) + 0.5, cx = static_cast<double>(x) + 0.5;
      const double e0 = edge(0, 1, cy, cx), e1 = edge(1, 2, cy, cx), e2 = edge(2, 0, cy, cx);
      if ((e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0)) m(y, x) = cls;
    }
  }
}

}  // namespace

std::vector<SampleRecord> generate_synthetic(std::uint64_t seed, std::size_t count, std::size_t size,
                                             std::size_t classes, const SyntheticOptions& opt) {
  if (classes < 2) throw InvalidArgument("generate_synthetic: classes must be >= 2");
  if (classes > 255) throw InvalidArgument("generate_synthetic: classes must be <= 255");
  if (size == 0 || size % 16 != 0) {
    throw InvalidArgument("generate_synthetic: size must be divisible by 16, got " + std::to_string(size));
  }
  if (opt.kinds.empty()) throw InvalidArgument("generate_synthetic: no shape kinds enabled");

  std::vector<SampleRecord> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xFFFFFFFFu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(idx)};
    SampleRng rng(seq);

    LabelMask mask(size, size, 0);
    const std::size_t shapes = uniform(rng, 1, classes - 1);
    for (std::size_t i = 1; i <= shapes; ++i) {
      const auto kind = opt.kinds[uniform(rng, 0, opt.kinds.size() - 1)];
      const auto cls = static_cast<std::uint8_t>(i);
      switch (kind) {
        case ShapeKind::Rectangle: paint_rectangle(mask, cls, rng); break;
        case ShapeKind::Circle: paint_circle(mask, cls, rng); break;
        case ShapeKind::Triangle: paint_triangle(mask, cls, rng); break;
      }
    }

    std::normal_distribution<double> noise(0.0, opt.noise_sigma);
    std::vector<double> img(3 * size * size);
    for (std::size_t p = 0; p < size * size; ++p) {
      const auto color = class_color(mask.data[p], classes);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(color[c] + noise(rng), 0.0, 1.0);
        img[c * size * size + p] = std::round(v * 255.0) / 255.0;
      }
    }

    char id[24];
    std::snprintf(id, sizeof id, "%06zu", idx);
    SampleRecord rec;
    rec.id = id;
    rec.image = Tensor({3, size, size}, std::move(img));
    rec.boundaries = gt_boundary_from_labels(mask, classes, opt.boundary_radius);
    rec.mask = std::move(mask);
    out.push_back(std::move(rec));
  }
  return out;
}

SampleRecord flip_sample(const SampleRecord& s) {
  SampleRecord f;
  f.id = s.id;
  f.image = flip_horizontal(s.image).detach();
  f.mask = s.mask;
  const std::size_t h = s.mask.height, w = s.mask.width;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) f.mask(y, x) = s.mask(y, w - 1 - x);
  f.boundaries = s.boundaries;
  for (std::size_t k = 0; k < s.boundaries.classes; ++k)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) f.boundaries.at(k, y, x) = s.boundaries.at(k, y, w - 1 - x);
  return f;
}

Batch make_batch(std::span<const SampleRecord* const> samples) {
  if (samples.empty()) throw InvalidArgument("make_batch: empty batch");
  const auto* first = samples.front();
  const std::size_t h = first->mask.height, w = first->mask.width, k = first->boundaries.classes;
  std::vector<double> img, bnd;
  Batch b;
  img.reserve(samples.size() * 3 * h * w);
  bnd.reserve(samples.size() * k * h * w);
  b.labels.reserve(samples.size() * h * w);
  for (const auto* s : samples) {
    if (s->mask.height != h || s->mask.width != w || s->boundaries.classes != k ||
        s->image.shape() != Shape{3, h, w}) {
      throw InvalidArgument("make_batch: sample '" + s->id + "' does not match the batch geometry");
    }
    auto iv = s->image.values();
    img.insert(img.end(), iv.begin(), iv.end());
    b.labels.insert(b.labels.end(), s->mask.data.begin(), s->mask.data.end());
    bnd.insert(bnd.end(), s->boundaries.bits.begin(), s->boundaries.bits.end());
  }
  b.images = Tensor({samples.size(), 3, h, w}, std::move(img));
  b.boundaries = Tensor({samples.size(), k, h, w}, std::move(bnd));
  return b;
}

}  // namespace pyrseg::data
