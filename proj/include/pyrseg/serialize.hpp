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

#include <filesystem>
#include <iosfwd>

#include "pyrseg/tensor.hpp"

namespace pyrseg {

/// Tensor file layout (little-endian):
///   8 bytes  magic "PSEGTNSR"
///   uint32   rank
///   uint32   dims[rank]
///   float64  values[product(dims)], row-major
inline constexpr char kTensorMagic[8] = {'P', 'S', 'E', 'G', 'T', 'N', 'S', 'R'};

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace pyrseg
