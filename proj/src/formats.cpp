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

#include "pyrseg/formats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "pyrseg/error.hpp"
#include "pyrseg/serialize.hpp"

namespace pyrseg::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

struct NetpbmHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
  std::size_t data_offset = 0;
};

// Parses "P5"/"P6" headers: magic, width, height, maxval, one whitespace byte.
NetpbmHeader parse_header(std::span<const std::uint8_t> b, char kind) {
  const char* name = kind == '5' ? "PGM" : "PPM";
  if (b.size() < 2 || b[0] != 'P' || b[1] != static_cast<std::uint8_t>(kind)) {
    throw ParseError(std::string("not a binary ") + name + " (expected magic P" + kind + ")", 0);
  }
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* field) {
    skip_space();
    if (pos >= b.size()) throw ParseError(std::string(name) + " header truncated before " + field, pos);
    if (!std::isdigit(b[pos])) throw ParseError(std::string(name) + " header: expected " + field, pos);
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
      if (v > (1u << 24)) throw ParseError(std::string(name) + " header: " + field + " too large", start);
      ++pos;
    }
    return v;
  };
  if (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') {
    throw ParseError(std::string(name) + " header: expected whitespace after magic", pos);
  }
  NetpbmHeader h;
  h.width = number("width");
  h.height = number("height");
  const std::size_t maxval_at = pos;
  h.maxval = number("maxval");
  if (h.maxval == 0 || h.maxval > 255) {
    throw ParseError(std::string(name) + " header: maxval must be in [1, 255]", maxval_at);
  }
  if (pos >= b.size() || !std::isspace(b[pos])) {
    throw ParseError(std::string(name) + " header: expected single whitespace before raster", pos);
  }
  h.data_offset = pos + 1;
  return h;
}

std::vector<std::uint8_t> header_bytes(char kind, std::size_t w, std::size_t h) {
  const std::string s = std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  if (img.data.size() != img.height * img.width) throw InvalidArgument("encode_pgm: inconsistent image size");
  auto out = header_bytes('5', img.width, img.height);
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  const auto h = parse_header(bytes, '5');
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.data_offset < n) {
    throw ParseError("PGM raster truncated: expected " + std::to_string(n) + " bytes", bytes.size());
  }
  GrayImage img(h.height, h.width);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset), n, img.data.begin());
  for (std::size_t i = 0; i < n; ++i) {
    if (img.data[i] > h.maxval) throw ParseError("PGM sample exceeds maxval", h.data_offset + i);
  }
  return img;
}

void write_pgm(const fs::path& path, const GrayImage& img) { write_file(path, encode_pgm(img)); }

GrayImage read_pgm(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_pgm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_ppm(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.shape()[0] != 3) {
    throw InvalidArgument("encode_ppm: expected [3,H,W], got " + shape_str(rgb.shape()));
  }
  const std::size_t h = rgb.shape()[1], w = rgb.shape()[2];
  auto out = header_bytes('6', w, h);
  const auto v = rgb.values();
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < 3; ++c) out.push_back(prob_to_byte(v[c * h * w + p]));
  return out;
}

Tensor decode_ppm(std::span<const std::uint8_t> bytes) {
  const auto h = parse_header(bytes, '6');
  const std::size_t n = h.width * h.height;
  if (bytes.size() - h.data_offset < 3 * n) {
    throw ParseError("PPM raster truncated: expected " + std::to_string(3 * n) + " bytes", bytes.size());
  }
  std::vector<double> v(3 * n);
  const double scale = static_cast<double>(h.maxval);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t c = 0; c < 3; ++c) v[c * n + p] = static_cast<double>(bytes[h.data_offset + 3 * p + c]) / scale;
  return Tensor({3, h.height, h.width}, std::move(v));
}

void write_ppm(const fs::path& path, const Tensor& rgb) { write_file(path, encode_ppm(rgb)); }

Tensor read_ppm(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

std::uint8_t prob_to_byte(double p) {
  if (std::isnan(p)) throw InvalidArgument("prob_to_byte: NaN probability");
  return static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
}

double byte_to_prob(std::uint8_t b) { return static_cast<double>(b) / 255.0; }

void write_prob_map(const fs::path& path, const ProbMap& m) {
  GrayImage img(m.height, m.width);
  std::transform(m.data.begin(), m.data.end(), img.data.begin(), prob_to_byte);
  write_pgm(path, img);
}

ProbMap read_prob_map(const fs::path& path) {
  const auto img = read_pgm(path);
  ProbMap m(img.height, img.width);
  std::transform(img.data.begin(), img.data.end(), m.data.begin(), byte_to_prob);
  return m;
}

void write_label_mask(const fs::path& path, const LabelMask& m) { write_pgm(path, m); }

LabelMask validate_label_mask(GrayImage img, std::size_t classes, const std::string& origin) {
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const auto v = img.data[i];
    if (v != kIgnoreLabel && v >= classes) {
      throw ValidationError(origin + ": label " + std::to_string(v) + " at pixel (" + std::to_string(i / img.width) +
                            ", " + std::to_string(i % img.width) + ") is >= class count " + std::to_string(classes));
    }
  }
  LabelMask m;
  m.height = img.height;
  m.width = img.width;
  m.data = std::move(img.data);
  return m;
}

LabelMask read_label_mask(const fs::path& path, std::size_t classes) {
  return validate_label_mask(read_pgm(path), classes, path.string());
}

void write_boundaries(const fs::path& path, const BoundaryLabels& b) { save_tensor(path, b.to_tensor()); }

BoundaryLabels read_boundaries(const fs::path& path) {
  const auto t = load_tensor(path);
  if (t.rank() != 3) throw ValidationError(path.string() + ": boundary tensor must be [K,H,W], got " + shape_str(t.shape()));
  BoundaryLabels b(t.shape()[0], t.shape()[1], t.shape()[2]);
  const auto v = t.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0 && v[i] != 1.0) {
      throw ValidationError(path.string() + ": boundary value at index " + std::to_string(i) + " is not 0 or 1");
    }
    b.bits[i] = v[i] == 1.0 ? 1 : 0;
  }
  return b;
}

namespace {

json entry_to_json(const ManifestEntry& e) {
  json j{{"id", e.id}};
  if (!e.image.empty()) j["image"] = e.image;
  if (!e.mask.empty()) j["mask"] = e.mask;
  if (!e.boundary.empty()) j["boundary"] = e.boundary;
  if (!e.boundary_maps.empty()) j["boundary_maps"] = e.boundary_maps;
  if (!e.gradient_maps.empty()) j["gradient_maps"] = e.gradient_maps;
  return j;
}

ManifestEntry entry_from_json(const json& j, std::size_t index) {
  const std::string where = "manifest entry " + std::to_string(index);
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  ManifestEntry e;
  for (const auto& [key, value] : j.items()) {
    auto str = [&] {
      if (!value.is_string()) throw ValidationError(where + ": field '" + key + "' must be a string");
      return value.get<std::string>();
    };
    auto list = [&] {
      if (!value.is_array()) throw ValidationError(where + ": field '" + key + "' must be a list of strings");
      std::vector<std::string> out;
      for (const auto& s : value) {
        if (!s.is_string()) throw ValidationError(where + ": field '" + key + "' must be a list of strings");
        out.push_back(s.get<std::string>());
      }
      return out;
    };
    if (key == "id") e.id = str();
    else if (key == "image") e.image = str();
    else if (key == "mask") e.mask = str();
    else if (key == "boundary") e.boundary = str();
    else if (key == "boundary_maps") e.boundary_maps = list();
    else if (key == "gradient_maps") e.gradient_maps = list();
    else throw ValidationError(where + ": unknown field '" + key + "'");
  }
  if (e.id.empty()) throw ValidationError(where + ": missing id");
  return e;
}

json parse_json_file(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

void write_json_file(const fs::path& path, const json& j) {
  const std::string s = j.dump(2) + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void sort_and_check(std::vector<ManifestEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].id == entries[i - 1].id) throw ValidationError("manifest: duplicate id '" + entries[i].id + "'");
  }
}

}  // namespace

void write_manifest(const fs::path& dir, std::vector<ManifestEntry> entries) {
  sort_and_check(entries);
  json j = json::array();
  for (const auto& e : entries) j.push_back(entry_to_json(e));
  write_json_file(dir / kManifestFile, j);
}

std::vector<ManifestEntry> read_manifest(const fs::path& dir) {
  const auto path = dir / kManifestFile;
  if (!fs::exists(path)) throw IoError("missing manifest " + path.string());
  const json j = parse_json_file(path);
  if (!j.is_array()) throw ValidationError(path.string() + ": manifest must be a JSON list");
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < j.size(); ++i) entries.push_back(entry_from_json(j[i], i));
  sort_and_check(entries);
  return entries;
}

void write_dataset_info(const fs::path& dir, const DatasetInfo& info) {
  json j{{"classes", info.classes}, {"size", info.size}, {"count", info.count}};
  if (info.seed) j["seed"] = *info.seed;
  write_json_file(dir / kDatasetInfoFile, j);
}

DatasetInfo read_dataset_info(const fs::path& dir) {
  const auto path = dir / kDatasetInfoFile;
  if (!fs::exists(path)) throw IoError("missing " + path.string());
  const json j = parse_json_file(path);
  if (!j.is_object()) throw ValidationError(path.string() + ": expected an object");
  DatasetInfo info;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number_unsigned()) throw ValidationError(path.string() + ": field '" + key + "' must be a non-negative integer");
    if (key == "classes") info.classes = value.get<std::size_t>();
    else if (key == "size") info.size = value.get<std::size_t>();
    else if (key == "count") info.count = value.get<std::size_t>();
    else if (key == "seed") info.seed = value.get<std::uint64_t>();
    else throw ValidationError(path.string() + ": unknown field '" + key + "'");
  }
  if (info.classes < 2 || info.classes > 255) throw ValidationError(path.string() + ": classes must be in [2, 255]");
  return info;
}

void save_dataset(const fs::path& dir, const std::vector<SampleRecord>& samples, const DatasetInfo& info) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  std::vector<ManifestEntry> entries;
  for (const auto& s : samples) {
    ManifestEntry e{s.id, s.id + ".ppm", s.id + "_mask.pgm", s.id + "_boundary.tensor", {}, {}};
    write_ppm(dir / e.image, s.image);
    write_label_mask(dir / e.mask, s.mask);
    write_boundaries(dir / e.boundary, s.boundaries);
    entries.push_back(std::move(e));
  }
  write_manifest(dir, std::move(entries));
  write_dataset_info(dir, info);
}

Dataset load_dataset(const fs::path& dir) {
  Dataset ds;
  ds.info = read_dataset_info(dir);
  for (const auto& e : read_manifest(dir)) {
    if (e.image.empty() || e.mask.empty() || e.boundary.empty()) {
      throw ValidationError("dataset entry '" + e.id + "' must list image, mask and boundary");
    }
    SampleRecord s;
    s.id = e.id;
    s.image = read_ppm(dir / e.image);
    s.mask = read_label_mask(dir / e.mask, ds.info.classes);
    s.boundaries = read_boundaries(dir / e.boundary);
    const std::size_t h = s.mask.height, w = s.mask.width;
    if (s.image.shape() != Shape{3, h, w} || s.boundaries.classes != ds.info.classes || s.boundaries.height != h ||
        s.boundaries.width != w) {
      throw ValidationError("dataset entry '" + e.id + "': image, mask and boundary sizes disagree");
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<ProbMap> read_prob_maps(const fs::path& dir, const std::vector<std::string>& files) {
  std::vector<ProbMap> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_prob_map(dir / f));
  return out;
}

}  // namespace pyrseg::data
