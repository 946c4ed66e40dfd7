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

#include "pyrseg/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pyrseg/error.hpp"

namespace pyrseg {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(unsigned char* dst, std::size_t n, const char* what) {
    is_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw ParseError(std::string("truncated tensor file while reading ") + what,
                       offset_ + static_cast<std::size_t>(is_.gcount()));
    }
    offset_ += n;
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  double f64() {
    unsigned char b[8];
    bytes(b, 8, "values");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic, sizeof kTensorMagic);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.values()) put_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  Reader r(is);
  unsigned char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kTensorMagic, 8) != 0) throw ParseError("bad tensor magic", 0);
  const std::uint32_t rank = r.u32("rank");
  if (rank > 8) throw ParseError("unsupported tensor rank " + std::to_string(rank), 8);
  Shape shape(rank);
  for (auto& d : shape) d = r.u32("dims");
  const std::size_t n = shape_numel(shape);
  std::vector<double> values(n);
  for (auto& v : values) v = r.f64();
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
  if (!os) throw IoError("failed writing " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace pyrseg
