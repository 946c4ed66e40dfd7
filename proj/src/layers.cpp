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

#include "pyrseg/layers.hpp"

#include <cmath>

namespace pyrseg {

ConvLayer ConvLayer::create(std::size_t cout, std::size_t cin, std::size_t kh, std::size_t kw,
                            Conv2dOptions opt, Rng& rng) {
  const std::size_t cin_g = cin / opt.groups;
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin_g * kh * kw));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(cout * cin_g * kh * kw);
  for (auto& v : w) v = dist(rng);
  ConvLayer layer{Tensor({cout, cin_g, kh, kw}, std::move(w)), Tensor::zeros({cout}), opt};
  layer.weight.set_requires_grad(true);
  layer.bias.set_requires_grad(true);
  return layer;
}

ConvReluNorm ConvReluNorm::create(std::size_t cout, std::size_t cin, std::size_t stride, Rng& rng) {
  return {ConvLayer::create(cout, cin, 3, 3, {stride, 1, 1}, rng), NormState::create(cout)};
}

Tensor ConvReluNorm::operator()(const Tensor& x, bool training) {
  return norm_affine(relu(conv(x)), norm, training);
}

ConvNormRelu ConvNormRelu::create(std::size_t cout, std::size_t cin, std::size_t stride, Rng& rng) {
  return {ConvLayer::create(cout, cin, 3, 3, {stride, 1, 1}, rng), NormState::create(cout)};
}

Tensor ConvNormRelu::operator()(const Tensor& x, bool training) {
  return relu(norm_affine(conv(x), norm, training));
}

void NamedTensors::add_conv(const std::string& prefix, const ConvLayer& c) {
  add(prefix + ".weight", c.weight);
  add(prefix + ".bias", c.bias);
}

void NamedTensors::add_norm_params(const std::string& prefix, const NormState& n) {
  add(prefix + ".gamma", n.gamma);
  add(prefix + ".beta", n.beta);
}

void NamedTensors::add_norm_buffers(const std::string& prefix, const NormState& n) {
  add(prefix + ".running_mean", n.running_mean);
  add(prefix + ".running_var", n.running_var);
}

std::vector<Tensor> NamedTensors::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items.size());
  for (const auto& [name, t] : items) out.push_back(t);
  return out;
}

}  // namespace pyrseg
