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
#include <vector>

namespace pyrseg {

// Row-major H x W plane.
template <class T>
struct Grid2 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> data;

  Grid2() = default;
  Grid2(std::size_t h, std::size_t w, T fill = T{}) : height(h), width(w), data(h * w, fill) {}

  T& operator()(std::size_t y, std::size_t x) { return data[y * width + x]; }
  const T& operator()(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t size() const { return data.size(); }

  bool operator==(const Grid2&) const = default;
};

using ProbMap = Grid2<double>;
using BinaryMap = Grid2<std::uint8_t>;

}  // namespace pyrseg
