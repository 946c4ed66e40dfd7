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
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pyrseg/grid.hpp"
#include "pyrseg/tensor.hpp"

namespace pyrseg::data {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// Per-pixel class ids in {0..K-1} or kIgnoreLabel.
struct LabelMask : Grid2<std::uint8_t> {
  using Grid2::Grid2;
};

/// K x H x W multi-label boundary bits; a pixel may be on the boundary of
/// several classes.
struct BoundaryLabels {
  std::size_t classes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BoundaryLabels() = default;
  BoundaryLabels(std::size_t k, std::size_t h, std::size_t w) : classes(k), height(h), width(w), bits(k * h * w, 0) {}

  std::uint8_t& at(std::size_t k, std::size_t y, std::size_t x) { return bits[(k * height + y) * width + x]; }
  std::uint8_t at(std::size_t k, std::size_t y, std::size_t x) const { return bits[(k * height + y) * width + x]; }
  BinaryMap channel(std::size_t k) const;
  // [K,H,W] tensor of 0/1 values.
  Tensor to_tensor() const;

  bool operator==(const BoundaryLabels&) const = default;
};

struct SampleRecord {
  std::string id;
  Tensor image;  // [3,H,W] in [0,1]
  LabelMask mask;
  BoundaryLabels boundaries;
};

/// Pixel p is on the boundary of class k iff its Chebyshev neighborhood of
/// the given radius (p included) contains a class-k pixel and a pixel with a
/// different non-ignore label. Ignore pixels are never boundary.
BoundaryLabels gt_boundary_from_labels(const LabelMask& mask, std::size_t classes, std::size_t radius = 1);

enum class ShapeKind { Rectangle, Circle, Triangle };

struct SyntheticOptions {
  std::vector<ShapeKind> kinds{ShapeKind::Rectangle, ShapeKind::Circle, ShapeKind::Triangle};
  double noise_sigma = 0.05;
  std::size_t boundary_radius = 1;
};

// Base RGB color of a class.
std::array<double, 3> class_color(std::size_t cls, std::size_t classes);

/// Deterministic synthetic scenes: background class 0 plus 1..K-1 filled
/// shapes painted back to front, shape i carrying class i. Pixel colors are
/// the class color plus clipped Gaussian noise, quantized to 8 bits.
std::vector<SampleRecord> generate_synthetic(std::uint64_t seed, std::size_t count, std::size_t size,
                                             std::size_t classes, const SyntheticOptions& opt = {});

// Mirror a sample left-right (image, mask and boundaries).
SampleRecord flip_sample(const SampleRecord& s);

/// Training batch assembled from samples.
struct Batch {
  Tensor images;                     // [N,3,H,W]
  std::vector<std::uint8_t> labels;  // [N,H,W]
  Tensor boundaries;                 // [N,K,H,W]
};

Batch make_batch(std::span<const SampleRecord* const> samples);

}  // namespace pyrseg::data
