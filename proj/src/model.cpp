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

#include "pyrseg/model.hpp"

#include <fstream>
#include <set>

#include "pyrseg/error.hpp"
#include "pyrseg/serialize.hpp"

namespace pyrseg::model {

JointModel::JointModel(const ModelConfig& cfg)
    : cfg_((validate(cfg), cfg)),
      rng_(cfg.seed),
      backbone_(cfg.channels, rng_),
      pcm_(cfg.channels, cfg.steps, cfg.grids, rng_),
      seg_head_(ConvLayer::create(cfg.classes, cfg.channels, 1, 1, {}, rng_)),
      bnd_head_(ConvLayer::create(cfg.classes, cfg.channels, 1, 1, {}, rng_)),
      fusion_(FusionParams::create(cfg.classes, rng_)) {}

Streams JointModel::forward_streams(const Tensor& image, bool training) {
  auto pyramid = backbone_.encode(image, training);
  return run_schedule(pyramid, pcm_, cfg_.steps, cfg_.step_parity, training);
}

ModelOutputs JointModel::forward(const Tensor& image, bool training) {
  auto streams = forward_streams(image, training);
  return heads(streams, image.dim(2), image.dim(3));
}

ModelOutputs JointModel::heads(const Streams& streams, std::size_t out_h, std::size_t out_w) {
  ModelOutputs out;
  out.mask_logits = bilinear_upsample(seg_head_(streams.segmentation.latest()[2]), out_h, out_w);
  out.mask_prob = softmax_channels(out.mask_logits);
  out.spatial_grad = spatial_gradient(out.mask_prob, cfg_.spatial_gradient_k);
  if (cfg_.boundary_head) {
    out.boundary_prob = sigmoid(bilinear_upsample(bnd_head_(streams.boundary.latest()[2]), out_h, out_w));
    out.fused = fuse(out.boundary_prob, out.spatial_grad, fusion_);
  }
  return out;
}

NamedTensors JointModel::parameters() const {
  NamedTensors params, buffers;
  backbone_.collect(params, buffers, "backbone");
  pcm_.collect(params, buffers, "pcm");
  params.add_conv("head.seg", seg_head_);
  params.add_conv("head.boundary", bnd_head_);
  params.add_conv("fusion", fusion_.conv);
  return params;
}

NamedTensors JointModel::buffers() const {
  NamedTensors params, buffers;
  backbone_.collect(params, buffers, "backbone");
  pcm_.collect(params, buffers, "pcm");
  return buffers;
}

void JointModel::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  save_config(dir / "config.json", cfg_);
  nlohmann::json index = nlohmann::json::array();
  auto params = parameters();
  auto bufs = buffers();
  for (const auto& set : {params, bufs}) {
    for (const auto& [name, t] : set.items) {
      index.push_back(name);
      save_tensor(dir / (name + ".tensor"), t);
    }
  }
  std::ofstream os(dir / "index.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "index.json").string());
  os << index.dump(2) << '\n';
}

JointModel JointModel::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("checkpoint directory " + dir.string() + " not found");
  JointModel m(load_config(dir / "config.json"));
  auto params = m.parameters();
  auto bufs = m.buffers();
  for (auto* set : {&params, &bufs}) {
    for (auto& [name, t] : set->items) {
      const auto path = dir / (name + ".tensor");
      if (!std::filesystem::exists(path)) throw ValidationError("checkpoint is missing tensor '" + name + "'");
      Tensor loaded = load_tensor(path);
      if (loaded.shape() != t.shape()) {
        throw ValidationError("checkpoint tensor '" + name + "' has shape " + shape_str(loaded.shape()) +
                              ", model expects " + shape_str(t.shape()));
      }
      auto dst = t.mutable_values();
      auto src = loaded.values();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return m;
}

}  // namespace pyrseg::model
