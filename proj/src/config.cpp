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

#include "pyrseg/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "pyrseg/error.hpp"

namespace pyrseg {

using nlohmann::json;

std::string to_string(StepParity p) { return p == StepParity::BoundaryOdd ? "boundary-odd" : "seg-odd"; }
std::string to_string(DualityReduction r) { return r == DualityReduction::Sum ? "sum" : "mean"; }
std::string to_string(BetaScope s) {
  return s == BetaScope::PerClassPerBatch ? "per-class-per-batch" : "global-per-batch";
}

void validate(const ModelConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("config field '" + field + "': " + why);
  };
  if (c.classes < 2) fail("classes", "must be >= 2");
  if (c.classes > 255) fail("classes", "must be <= 255 (255 is the ignore label)");
  if (c.channels < 1) fail("channels", "must be >= 1");
  if (c.steps < 1 || c.steps > 8) fail("steps", "must be in [1, 8]");
  if (c.grids.empty()) fail("grids", "must list at least one grid size");
  for (auto g : c.grids)
    if (g < 1) fail("grids", "grid sizes must be >= 1");
  if (c.spatial_gradient_k < 1 || c.spatial_gradient_k % 2 == 0) fail("spatial_gradient_k", "must be odd and >= 1");
  if (c.lambda1 < 0) fail("lambda1", "must be >= 0");
  if (c.lambda2 < 0) fail("lambda2", "must be >= 0");
  if (c.base_lr < 0) fail("base_lr", "must be >= 0");
  if (c.power < 0) fail("power", "must be >= 0");
  if (c.momentum < 0 || c.momentum >= 1) fail("momentum", "must be in [0, 1)");
  if (c.weight_decay < 0) fail("weight_decay", "must be >= 0");
  if (c.epochs < 1) fail("epochs", "must be >= 1");
  if (c.batch_size < 1) fail("batch_size", "must be >= 1");
  if (c.image_size < 16 || c.image_size % 16 != 0) fail("image_size", "must be a positive multiple of 16");
  if (c.tolerance_fraction < 0) fail("tolerance_fraction", "must be >= 0");
}

json to_json(const ModelConfig& c) {
  return json{{"classes", c.classes},
              {"channels", c.channels},
              {"steps", c.steps},
              {"grids", c.grids},
              {"spatial_gradient_k", c.spatial_gradient_k},
              {"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"base_lr", c.base_lr},
              {"power", c.power},
              {"momentum", c.momentum},
              {"weight_decay", c.weight_decay},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"image_size", c.image_size},
              {"step_parity", to_string(c.step_parity)},
              {"duality_reduction", to_string(c.duality_reduction)},
              {"beta_scope", to_string(c.beta_scope)},
              {"eval_nms", c.eval_nms},
              {"tolerance_fraction", c.tolerance_fraction},
              {"boundary_head", c.boundary_head}};
}

namespace {

std::size_t get_count(const json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw ValidationError("config field '" + key + "': expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) throw ValidationError("config field '" + key + "': expected a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ValidationError("config field '" + key + "': expected true/false");
  return v.get<bool>();
}

std::string get_enum(const json& v, const std::string& key, std::initializer_list<const char*> allowed) {
  if (!v.is_string()) throw ValidationError("config field '" + key + "': expected a string");
  auto s = v.get<std::string>();
  for (const char* a : allowed)
    if (s == a) return s;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  throw ValidationError("config field '" + key + "': '" + s + "' is not one of {" + list + "}");
}

}  // namespace

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be a JSON object");
  ModelConfig c;
  using Setter = std::function<void(const json&, const std::string&)>;
  const std::map<std::string, Setter> fields{
      {"classes", [&](const json& v, const std::string& k) { c.classes = get_count(v, k); }},
      {"channels", [&](const json& v, const std::string& k) { c.channels = get_count(v, k); }},
      {"steps", [&](const json& v, const std::string& k) { c.steps = get_count(v, k); }},
      {"grids",
       [&](const json& v, const std::string& k) {
         if (!v.is_array()) throw ValidationError("config field '" + k + "': expected an array");
         c.grids.clear();
         for (const auto& e : v) c.grids.push_back(get_count(e, k));
       }},
      {"spatial_gradient_k", [&](const json& v, const std::string& k) { c.spatial_gradient_k = get_count(v, k); }},
      {"lambda1", [&](const json& v, const std::string& k) { c.lambda1 = get_real(v, k); }},
      {"lambda2", [&](const json& v, const std::string& k) { c.lambda2 = get_real(v, k); }},
      {"base_lr", [&](const json& v, const std::string& k) { c.base_lr = get_real(v, k); }},
      {"power", [&](const json& v, const std::string& k) { c.power = get_real(v, k); }},
      {"momentum", [&](const json& v, const std::string& k) { c.momentum = get_real(v, k); }},
      {"weight_decay", [&](const json& v, const std::string& k) { c.weight_decay = get_real(v, k); }},
      {"epochs", [&](const json& v, const std::string& k) { c.epochs = get_count(v, k); }},
      {"batch_size", [&](const json& v, const std::string& k) { c.batch_size = get_count(v, k); }},
      {"seed", [&](const json& v, const std::string& k) { c.seed = get_count(v, k); }},
      {"image_size", [&](const json& v, const std::string& k) { c.image_size = get_count(v, k); }},
      {"step_parity",
       [&](const json& v, const std::string& k) {
         c.step_parity = get_enum(v, k, {"boundary-odd", "seg-odd"}) == "boundary-odd" ? StepParity::BoundaryOdd
                                                                                      : StepParity::SegOdd;
       }},
      {"duality_reduction",
       [&](const json& v, const std::string& k) {
         c.duality_reduction =
             get_enum(v, k, {"sum", "mean"}) == "sum" ? DualityReduction::Sum : DualityReduction::Mean;
       }},
      {"beta_scope",
       [&](const json& v, const std::string& k) {
         c.beta_scope = get_enum(v, k, {"per-class-per-batch", "global-per-batch"}) == "per-class-per-batch"
                            ? BetaScope::PerClassPerBatch
                            : BetaScope::GlobalPerBatch;
       }},
      {"eval_nms", [&](const json& v, const std::string& k) { c.eval_nms = get_bool(v, k); }},
      {"tolerance_fraction", [&](const json& v, const std::string& k) { c.tolerance_fraction = get_real(v, k); }},
      {"boundary_head", [&](const json& v, const std::string& k) { c.boundary_head = get_bool(v, k); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ValidationError("config field '" + key + "': unknown key");
    it->second(value, key);
  }
  validate(c);
  return c;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what(), e.byte);
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ModelConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write config " + path.string());
  os << to_json(cfg).dump(2) << '\n';
}

json config_schema() {
  auto count = [](std::size_t min) { return json{{"type", "integer"}, {"minimum", min}}; };
  auto real = [](double min) { return json{{"type", "number"}, {"minimum", min}}; };
  return json{
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"title", "pyrseg model config"},
      {"type", "object"},
      {"additionalProperties", false},
      {"properties",
       {{"classes", {{"type", "integer"}, {"minimum", 2}, {"maximum", 255}}},
        {"channels", count(1)},
        {"steps", {{"type", "integer"}, {"minimum", 1}, {"maximum", 8}}},
        {"grids", {{"type", "array"}, {"minItems", 1}, {"items", count(1)}}},
        {"spatial_gradient_k", count(1)},
        {"lambda1", real(0)},
        {"lambda2", real(0)},
        {"base_lr", real(0)},
        {"power", real(0)},
        {"momentum", {{"type", "number"}, {"minimum", 0}, {"exclusiveMaximum", 1}}},
        {"weight_decay", real(0)},
        {"epochs", count(1)},
        {"batch_size", count(1)},
        {"seed", count(0)},
        {"image_size", {{"type", "integer"}, {"minimum", 16}, {"multipleOf", 16}}},
        {"step_parity", {{"enum", {"boundary-odd", "seg-odd"}}}},
        {"duality_reduction", {{"enum", {"sum", "mean"}}}},
        {"beta_scope", {{"enum", {"per-class-per-batch", "global-per-batch"}}}},
        {"eval_nms", {{"type", "boolean"}}},
        {"tolerance_fraction", real(0)},
        {"boundary_head", {{"type", "boolean"}}}}}};
}

}  // namespace pyrseg
