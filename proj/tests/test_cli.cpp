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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pyrseg/config.hpp"
#include "pyrseg/error.hpp"
#include "pyrseg/formats.hpp"
#include "pyrseg/train.hpp"
#include "support.hpp"

using namespace pyrseg;
using nlohmann::json;
using pyrseg::testing::scratch_dir;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args) {
  static const fs::path logs = scratch_dir("cli_logs");
  const auto out = logs / "stdout", err = logs / "stderr";
  const std::string cmd = std::string(PYRSEG_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

bool same_tree(const fs::path& a, const fs::path& b) {
  std::vector<fs::path> fa, fb;
  for (auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  for (auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb || fa.empty()) return false;
  for (auto& f : fa)
    if (slurp(a / f) != slurp(b / f)) return false;
  return true;
}

// Writes a prediction directory whose boundary maps are the gt boundaries,
// optionally shifted right by one pixel.
fs::path gt_as_prediction(const fs::path& gt_dir, const std::string& name, bool shift) {
  auto out = scratch_dir(name);
  const auto ds = data::load_dataset(gt_dir);
  std::vector<data::ManifestEntry> entries;
  for (const auto& s : ds.samples) {
    data::ManifestEntry e{s.id, "", "", "", {}, {}};
    for (std::size_t k = 0; k < s.boundaries.classes; ++k) {
      ProbMap m(s.boundaries.height, s.boundaries.width, 0.0);
      for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) {
          const std::size_t src = shift ? (x == 0 ? m.width : x - 1) : x;
          if (src < m.width && s.boundaries.at(k, y, src)) m(y, x) = 1.0;
        }
      e.boundary_maps.push_back(s.id + "_b" + std::to_string(k) + ".pgm");
      data::write_prob_map(out / e.boundary_maps.back(), m);
    }
    entries.push_back(e);
  }
  data::write_manifest(out, entries);
  return out;
}

}  // namespace

TEST_CASE("config round trip and strict parsing") {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.lambda2 = 10;
  cfg.step_parity = StepParity::SegOdd;
  cfg.duality_reduction = DualityReduction::Sum;
  cfg.beta_scope = BetaScope::GlobalPerBatch;
  cfg.grids = {1, 2};
  const auto j = to_json(cfg);
  CHECK(config_from_json(j) == cfg);
  CHECK(to_json(config_from_json(j)) == j);
  CHECK(config_from_json(to_json(ModelConfig{})) == ModelConfig{});

  auto unknown = j;
  unknown["learning_rate"] = 0.1;
  CHECK_THROWS_AS(config_from_json(unknown), ValidationError);
  auto wrong_type = j;
  wrong_type["channels"] = "many";
  CHECK_THROWS_AS(config_from_json(wrong_type), ValidationError);
  for (const char* key : {"steps", "classes", "channels", "batch_size"}) {
    auto zero = j;
    zero[key] = 0;
    CAPTURE(key);
    CHECK_THROWS_AS(config_from_json(zero), ValidationError);
  }
  auto steps9 = j;
  steps9["steps"] = 9;
  CHECK_THROWS_AS(config_from_json(steps9), ValidationError);
  auto even_k = j;
  even_k["spatial_gradient_k"] = 4;
  CHECK_THROWS_AS(config_from_json(even_k), ValidationError);
  auto neg = j;
  neg["lambda1"] = -1;
  CHECK_THROWS_AS(config_from_json(neg), ValidationError);
  auto parity = j;
  parity["step_parity"] = "sideways";
  CHECK_THROWS_AS(config_from_json(parity), ValidationError);
  // Partial documents take defaults for missing keys.
  CHECK(config_from_json(json{{"classes", 5}}).classes == 5);
  CHECK(config_from_json(json{{"classes", 5}}).lambda2 == 1000.0);

  auto dir = scratch_dir("cfg");
  save_config(dir / "c.json", cfg);
  CHECK(load_config(dir / "c.json") == cfg);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
}

TEST_CASE("cli: config command") {
  auto r = run("config print");
  CHECK(r.code == 0);
  CHECK(config_from_json(json::parse(r.out)) == ModelConfig{});
  auto s = run("config schema");
  CHECK(s.code == 0);
  CHECK(json::parse(s.out).contains("properties"));
  auto dir = scratch_dir("cli_cfg");
  std::ofstream(dir / "bad.json") << R"({"clases": 3})";
  auto bad = run("config print --config " + (dir / "bad.json").string());
  CHECK(bad.code == 2);
  CHECK(bad.err.find("clases") != std::string::npos);
  CHECK(run("config print --config " + (dir / "none.json").string()).code == 3);
  CHECK(run("no-such-command").code == 2);
}

TEST_CASE("cli: gen-data") {
  auto a = scratch_dir("gen_a"), b = scratch_dir("gen_b");
  const std::string args = " --seed 3 --count 16 --size 64 --classes 4";
  REQUIRE(run("gen-data --out " + a.string() + args).code == 0);
  REQUIRE(run("gen-data --out " + b.string() + args).code == 0);
  CHECK(data::read_manifest(a).size() == 16);
  CHECK(data::read_dataset_info(a) == data::DatasetInfo{4, 64, 16, 3});
  CHECK(same_tree(a, b));
  auto bad = run("gen-data --out " + scratch_dir("gen_bad").string() + " --size 60");
  CHECK(bad.code != 0);
  CHECK(bad.err.find("16") != std::string::npos);
}

TEST_CASE("cli: train, infer and evaluate") {
  auto data_dir = scratch_dir("pipe_data");
  REQUIRE(run("gen-data --out " + data_dir.string() + " --seed 2 --count 4 --size 32 --classes 3").code == 0);
  auto cfg_dir = scratch_dir("pipe_cfg");
  ModelConfig cfg;
  cfg.classes = 3;
  cfg.channels = 4;
  cfg.image_size = 32;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  save_config(cfg_dir / "config.json", cfg);
  auto wrong = cfg;
  wrong.classes = 5;
  save_config(cfg_dir / "wrong.json", wrong);

  auto run_dir = scratch_dir("pipe_run");
  auto tr = run("train --quiet --config " + (cfg_dir / "config.json").string() + " --data " + data_dir.string() +
                " --out " + run_dir.string());
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(run_dir / "loss.csv"));
  const auto ckpt = run_dir / "checkpoint";
  CHECK(fs::exists(ckpt / "index.json"));
  CHECK(run("train --quiet --config " + (cfg_dir / "wrong.json").string() + " --data " + data_dir.string() +
            " --out " + scratch_dir("pipe_wrong").string())
            .code == 2);

  SUBCASE("infer is deterministic and writes valid masks") {
    auto o1 = scratch_dir("infer1"), o2 = scratch_dir("infer2");
    REQUIRE(run("infer --checkpoint " + ckpt.string() + " --input " + data_dir.string() + " --out " + o1.string() +
                " --dump-gradient")
                .code == 0);
    REQUIRE(run("infer --checkpoint " + ckpt.string() + " --input " + data_dir.string() + " --out " + o2.string() +
                " --dump-gradient")
                .code == 0);
    CHECK(same_tree(o1, o2));
    const auto entries = data::read_manifest(o1);
    REQUIRE(entries.size() == 4);
    for (const auto& e : entries) {
      const auto m = data::read_label_mask(o1 / e.mask, 3);
      for (auto v : m.data) CHECK(v < 3);
      CHECK(e.boundary_maps.size() == 3);
      CHECK(e.gradient_maps.size() == 3);
    }
    // A single PPM input.
    auto o3 = scratch_dir("infer3");
    const auto first = data::read_manifest(data_dir).front();
    CHECK(run("infer --flip --checkpoint " + ckpt.string() + " --input " + (data_dir / first.image).string() +
              " --out " + o3.string())
              .code == 0);
    CHECK(data::read_manifest(o3).size() == 1);
    // The predictions evaluate against the gt.
    auto seg = run("eval-seg --pred " + o1.string() + " --gt " + data_dir.string());
    CHECK(seg.code == 0);
    const double miou = json::parse(seg.out)["miou"];
    CHECK(miou >= 0.0);
    CHECK(miou <= 1.0);
    auto bsd = run("eval-bsd --pred " + o1.string() + " --gt " + data_dir.string());
    CHECK(bsd.code == 0);
  }
  SUBCASE("missing checkpoint") {
    CHECK(run("infer --checkpoint " + (run_dir / "nope").string() + " --input " + data_dir.string() + " --out " +
              scratch_dir("infer_x").string())
              .code == 3);
  }
}

TEST_CASE("cli: evaluation examples") {
  auto gt = scratch_dir("eval_gt");
  REQUIRE(run("gen-data --out " + gt.string() + " --seed 9 --count 3 --size 32 --classes 3").code == 0);

  SUBCASE("pred == gt masks gives mIoU 1") {
    auto out = scratch_dir("eval_seg_out");
    auto r = run("eval-seg --pred " + gt.string() + " --gt " + gt.string() + " --out " + out.string());
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["miou"] == 1.0);
    CHECK(fs::exists(out / "miou.csv"));
    CHECK(json::parse(slurp(out / "summary.json"))["miou"] == 1.0);
  }
  SUBCASE("gt boundaries as probability maps give MF = AP = 1") {
    auto pred = gt_as_prediction(gt, "eval_bsd_pred", false);
    auto out = scratch_dir("eval_bsd_out");
    auto r = run("eval-bsd --pred " + pred.string() + " --gt " + gt.string() + " --out " + out.string());
    REQUIRE(r.code == 0);
    const auto s = json::parse(r.out);
    CHECK(s["mf_ods"] == 1.0);
    CHECK(s["ap"] == 1.0);
    for (const char* f : {"mf_ods.csv", "ap.csv", "pr_curve.csv", "summary.json"}) CHECK(fs::exists(out / f));
    auto t0 = run("eval-bsd --tolerance 0 --pred " + pred.string() + " --gt " + gt.string());
    CHECK(json::parse(t0.out)["mf_ods"] == 1.0);
  }
  SUBCASE("tolerance 0 counts only exact-pixel matches") {
    auto pred = gt_as_prediction(gt, "eval_bsd_shift", true);
    auto r = run("eval-bsd --tolerance 0 --pred " + pred.string() + " --gt " + gt.string());
    REQUIRE(r.code == 0);
    // Oracle: with radius 0 the matching is the pixel intersection.
    const auto ds = data::load_dataset(gt);
    const auto pm = data::read_manifest(pred);
    double f_sum = 0;
    int classes = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      double inter = 0, n_pred = 0, n_gt = 0;
      for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto p = data::read_prob_map(pred / pm[i].boundary_maps[k]);
        for (std::size_t y = 0; y < p.height; ++y)
          for (std::size_t x = 0; x < p.width; ++x) {
            const bool pv = p(y, x) >= 0.5, gv = ds.samples[i].boundaries.at(k, y, x);
            inter += pv && gv;
            n_pred += pv;
            n_gt += gv;
          }
      }
      if (n_gt == 0) continue;
      const double prec = n_pred ? inter / n_pred : 0, rec = inter / n_gt;
      f_sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
      ++classes;
    }
    const double mf = json::parse(r.out)["mf_ods"];
    CHECK(std::abs(mf - f_sum / classes) <= 1e-12);
    CHECK(mf < 1.0);
    // A one-pixel tolerance recovers every match.
    auto loose = run("eval-bsd --tolerance 0.04 --pred " + pred.string() + " --gt " + gt.string());
    CHECK(static_cast<double>(json::parse(loose.out)["mf_ods"]) > mf);
  }
  SUBCASE("mismatched ids and bad inputs") {
    auto pred = gt_as_prediction(gt, "eval_bsd_missing", false);
    auto entries = data::read_manifest(pred);
    entries.pop_back();
    data::write_manifest(pred, entries);
    auto r = run("eval-bsd --pred " + pred.string() + " --gt " + gt.string());
    CHECK(r.code == 2);
    CHECK(r.err.find("000002") != std::string::npos);
    CHECK(run("eval-seg --pred " + scratch_dir("empty").string() + " --gt " + gt.string()).code == 3);
    CHECK(run("eval-bsd --tolerance -1 --pred " + gt.string() + " --gt " + gt.string()).code == 2);
  }
}

TEST_CASE("cli: derive-boundary from a mask") {
  auto gt = scratch_dir("derive_gt");
  REQUIRE(run("gen-data --out " + gt.string() + " --seed 4 --count 1 --size 16 --classes 3").code == 0);
  const auto e = data::read_manifest(gt).front();
  auto out = scratch_dir("derive_out");
  REQUIRE(run("derive-boundary --mask " + (gt / e.mask).string() + " --classes 3 --out " + out.string()).code == 0);
  const auto maps = data::read_manifest(out).front().gradient_maps;
  REQUIRE(maps.size() == 3);
  const auto mask = data::read_label_mask(gt / e.mask, 3);
  // Each map is |onehot - box3(onehot)| quantized to 8 bits.
  for (std::size_t k = 0; k < 3; ++k) {
    const auto g = data::read_prob_map(out / maps[k]);
    std::vector<double> plane(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) plane[i] = mask.data[i] == k ? 1.0 : 0.0;
    const auto pooled = pyrseg::testing::box_mean_oracle(plane, 16, 16, 3);
    for (std::size_t i = 0; i < plane.size(); ++i)
      CHECK(std::abs(g.data[i] - std::abs(plane[i] - pooled[i])) <= 1.0 / 510 + 1e-12);
  }
  CHECK(run("derive-boundary --out " + out.string()).code == 2);
}
