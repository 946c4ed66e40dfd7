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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pyrseg/data.hpp"
#include "pyrseg/grid.hpp"
#include "pyrseg/tensor.hpp"

namespace pyrseg::data {

using GrayImage = Grid2<std::uint8_t>;

// Binary PGM (P5). Readers accept '#' comments in the header and maxval <= 255.
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

// Binary PPM (P6) from/to a [3,H,W] tensor in [0,1].
std::vector<std::uint8_t> encode_ppm(const Tensor& rgb);
Tensor decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);
Tensor read_ppm(const std::filesystem::path& path);

// round(255 * p) after clamping to [0,1].
std::uint8_t prob_to_byte(double p);
double byte_to_prob(std::uint8_t b);

void write_prob_map(const std::filesystem::path& path, const ProbMap& m);
ProbMap read_prob_map(const std::filesystem::path& path);

void write_label_mask(const std::filesystem::path& path, const LabelMask& m);
// Values >= classes other than the ignore label raise ValidationError.
LabelMask read_label_mask(const std::filesystem::path& path, std::size_t classes);
LabelMask validate_label_mask(GrayImage img, std::size_t classes, const std::string& origin);

// Boundary labels as a [K,H,W] tensor file of 0/1 values.
void write_boundaries(const std::filesystem::path& path, const BoundaryLabels& b);
BoundaryLabels read_boundaries(const std::filesystem::path& path);

/// One row of a manifest. Paths are relative to the manifest directory and
/// empty when the entry does not carry that artifact.
struct ManifestEntry {
  std::string id;
  std::string image;
  std::string mask;
  std::string boundary;
  std::vector<std::string> boundary_maps;  // per-class probability PGMs
  std::vector<std::string> gradient_maps;  // per-class spatial gradient PGMs

  bool operator==(const ManifestEntry&) const = default;
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kDatasetInfoFile = "dataset.json";

// Sorts by id; duplicate ids are rejected.
void write_manifest(const std::filesystem::path& dir, std::vector<ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& dir);

struct DatasetInfo {
  std::size_t classes = 0;
  std::size_t size = 0;
  std::size_t count = 0;
  std::optional<std::uint64_t> seed;

  bool operator==(const DatasetInfo&) const = default;
};

void write_dataset_info(const std::filesystem::path& dir, const DatasetInfo& info);
DatasetInfo read_dataset_info(const std::filesystem::path& dir);

/// Dataset directory: manifest.json, dataset.json and per sample
/// <id>.ppm, <id>_mask.pgm, <id>_boundary.tensor.
void save_dataset(const std::filesystem::path& dir, const std::vector<SampleRecord>& samples, const DatasetInfo& info);

struct Dataset {
  DatasetInfo info;
  std::vector<SampleRecord> samples;  // ordered by id
};

Dataset load_dataset(const std::filesystem::path& dir);

// Per-class probability PGMs, paths relative to dir.
std::vector<ProbMap> read_prob_maps(const std::filesystem::path& dir, const std::vector<std::string>& files);

}  // namespace pyrseg::data
