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

// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit code
// is nonzero when any selected criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pyrseg/boundary_fusion.hpp"
#include "pyrseg/train.hpp"
#include "support.hpp"

using namespace pyrseg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

// Runs a unit-test binary, optionally restricted to test cases matching
// `filter`; a filter that selects no case counts as a failure.
bool run_suite(const std::string& name, const std::string& filter = "") {
  std::string cmd = std::string(PYRSEG_TEST_DIR) + "/" + name;
  if (!filter.empty()) {
    cmd += " \"--test-case=" + filter + "\"";
    std::string listing;
    if (FILE* p = popen((cmd + " --count").c_str(), "r")) {
      char buf[256];
      while (std::fgets(buf, sizeof buf, p)) listing += buf;
      pclose(p);
    }
    if (listing.find("current filters: 0") != std::string::npos ||
        listing.find("current filters:") == std::string::npos) {
      std::cout << name << ": no test case matches \"" << filter << "\"" << std::endl;
      return false;
    }
  }
  const int status = std::system((cmd + " --minimal").c_str());
  return WIFEXITED(status) && WEXITSTATUS(status) == 0;
}

// The overfit setup: S=4, C=16, K=4, 16 synthetic 64x64 samples, 300
// iterations (batch 16), default optimizer and loss weights.
ModelConfig overfit_config(std::uint64_t seed) {
  ModelConfig cfg;
  cfg.image_size = 64;
  cfg.batch_size = 16;
  cfg.epochs = 300;
  cfg.seed = seed;
  return cfg;
}

std::vector<data::SampleRecord> train_set(std::uint64_t seed) { return data::generate_synthetic(seed, 16, 64, 4); }
std::vector<data::SampleRecord> held_out_set(std::uint64_t seed) {
  return data::generate_synthetic(seed + 1000, 16, 64, 4);
}

metrics::BoundaryEvalOptions eval_options(const ModelConfig& cfg) {
  metrics::BoundaryEvalOptions opt;
  opt.tolerance.fraction = cfg.tolerance_fraction;
  opt.nms = cfg.eval_nms;
  return opt;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  const bool ops = run_suite("test_tensor", "finite-difference checks for every differentiable op") &&
                   run_suite("test_fusion", "finite-difference checks for fusion ops") &&
                   run_suite("test_losses", "loss gradients match finite differences");
  ModelConfig cfg;  // S=4, C=16, K=4
  cfg.image_size = 16;
  model::JointModel m(cfg);
  auto sample = data::generate_synthetic(11, 1, 16, cfg.classes);
  std::vector<const data::SampleRecord*> ptrs{&sample[0]};
  auto batch = data::make_batch(ptrs);
  Tensor image = testing::leaf(batch.images.clone());
  const auto lc = loss::LossConfig::from(cfg);
  std::string detail = std::string("ops ") + (ops ? "ok" : "FAILED");
  bool model_ok = true;
  for (bool training : {true, false}) {
    auto f = [&] {
      auto o = m.forward(image, training);
      return loss::total_loss(o.mask_prob, o.spatial_grad, o.fused, batch.labels, batch.boundaries, lc).value;
    };
    // Every parameter tensor at up to 6 evenly spaced coordinates, and the
    // whole input; a full sweep of all weights would take hours.
    auto r = testing::grad_check(f, m.parameters().tensors(), 1e-5, 1e-3, 1e-6, 1, 6);
    const auto ri = testing::grad_check(f, {image});
    if (r.ok() && !ri.ok()) r.first_failure = "image: " + ri.first_failure;
    r.checked += ri.checked;
    r.failures += ri.failures;
    r.kinks += ri.kinks;
    model_ok = model_ok && r.ok() && r.checked > 1000;
    detail += std::string("; model ") + (training ? "train" : "eval") + " " + std::to_string(r.checked) +
              " coords, " + std::to_string(r.failures) + " failures, " + std::to_string(r.kinks) + " kinks";
    if (!r.ok()) detail += " (" + r.first_failure + ")";
  }
  const double secs = seconds_since(t0);
  detail += "; " + fmt(secs) + " s";
  return {ops && model_ok && secs < 60.0, detail};
}

Outcome criterion2() {
  const bool ok = run_suite("test_metrics", "match_boundaries equals brute force on 200 instances") &&
                  run_suite("test_metrics", "miou equals a naive per-pixel oracle") &&
                  run_suite("test_metrics", "AP equals the trapezoid oracle on random curves") &&
                  run_suite("test_metrics", "bipartite matcher equals exhaustive search");
  return {ok, "matching brute force, mIoU oracle, AP trapezoid oracle"};
}

Outcome criterion3() {
  std::string failed;
  for (const char* s : {"test_tensor", "test_pcm", "test_fusion", "test_losses", "test_metrics", "test_data",
                        "test_train", "test_cli"})
    if (!run_suite(s)) failed += std::string(" ") + s;
  return {failed.empty(), failed.empty() ? "all unit suites pass" : "failing:" + failed};
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  const auto cfg = overfit_config(0);
  const auto samples = train_set(0);
  model::JointModel m(cfg);
  const auto res = train::train(m, samples);
  const auto rep = train::evaluate(m, samples, eval_options(cfg));
  const double secs = seconds_since(t0);
  const bool ok = res.history.size() == 300 && rep.miou.mean >= 0.95 && rep.mf_boundary.mean >= 0.70 && secs < 900;
  return {ok, "train mIoU " + fmt(rep.miou.mean) + " (>= 0.95), MF(ODS) " + fmt(rep.mf_boundary.mean) +
                  " (>= 0.70), final loss " + fmt(res.history.back().loss.total) + ", " + fmt(secs) + " s"};
}

// Mean held-out report over seeds 0..2 for a config variant.
std::pair<double, double> held_out_means(const std::function<void(ModelConfig&)>& variant) {
  double miou = 0, mf_grad = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto cfg = overfit_config(seed);
    variant(cfg);
    model::JointModel m(cfg);
    train::train(m, train_set(seed));
    const auto rep = train::evaluate(m, held_out_set(seed), eval_options(cfg));
    miou += rep.miou.mean / 3;
    mf_grad += rep.mf_gradient.mean / 3;
  }
  return {miou, mf_grad};
}

Outcome criterion5() {
  const auto s4 = held_out_means([](ModelConfig&) {});
  const auto s1 = held_out_means([](ModelConfig& c) { c.steps = 1; });
  return {s4.first >= s1.first - 0.005,
          "held-out mIoU S=4 " + fmt(s4.first) + " vs S=1 " + fmt(s1.first) + " (tolerance 0.005)"};
}

Outcome criterion6() {
  const auto with = held_out_means([](ModelConfig&) {});
  const auto without = held_out_means([](ModelConfig& c) { c.lambda1 = 0.0; });
  return {with.second > without.second,
          "held-out MF of the mask-derived boundary: with L_D " + fmt(with.second) + " vs without " +
              fmt(without.second)};
}

// Near-one-hot half-plane masks: class a on one side of an axis-aligned
// border, class b on the other. Returns the widest run of nonzero gradient
// measured across the border.
std::size_t widest_band(const Tensor& grad, std::size_t k_classes, std::size_t n, bool vertical) {
  std::size_t widest = 0;
  const auto v = grad.values();
  for (std::size_t k = 0; k < k_classes; ++k)
    for (std::size_t line = 0; line < n; ++line) {
      std::size_t count = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = vertical ? line : i, x = vertical ? i : line;
        if (v[(k * n + y) * n + x] > 1e-9) ++count;
      }
      widest = std::max(widest, count);
    }
  return widest;
}

Outcome criterion7() {
  // A trained model supplies the configured pooling size; the gradient is
  // taken through the same operator the model applies to its masks.
  auto cfg = overfit_config(0);
  cfg.epochs = 20;
  model::JointModel m(cfg);
  train::train(m, train_set(0));
  const std::size_t k = m.config().spatial_gradient_k, classes = m.config().classes, n = 32;
  const double eps = 0.02;
  std::size_t widest = 0, masks = 0;
  bool all_zero_far = true;
  NoGradGuard guard;
  for (bool vertical : {true, false})
    for (std::size_t split = 1; split < n; ++split)
      for (std::size_t a = 0; a < classes; ++a) {
        const std::size_t b = (a + 1) % classes;
        std::vector<double> p(classes * n * n, eps / (classes - 1));
        for (std::size_t y = 0; y < n; ++y)
          for (std::size_t x = 0; x < n; ++x) {
            const std::size_t pos = vertical ? x : y;
            p[((pos < split ? a : b) * n + y) * n + x] = 1.0 - eps;
          }
        const auto g = model::spatial_gradient(Tensor({1, classes, n, n}, p), k);
        widest = std::max(widest, widest_band(g, classes, n, vertical));
        const auto gv = g.values();
        for (std::size_t c = 0; c < classes; ++c)
          for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
              const std::size_t pos = vertical ? x : y;
              const std::size_t dist = pos < split ? split - pos : pos - split + 1;
              if (dist > k / 2 + 1 && gv[(c * n + y) * n + x] > 1e-9) all_zero_far = false;
            }
        ++masks;
      }
  return {widest <= k - 1 && widest > 0 && all_zero_far,
          std::to_string(masks) + " half-plane masks, widest band " + std::to_string(widest) + " (<= " +
              std::to_string(k - 1) + ")"};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome criterion8() {
  const auto cfg = overfit_config(3);
  const auto samples = train_set(3);
  std::map<fs::path, std::string> trees[2];
  for (int r = 0; r < 2; ++r) {
    const auto dir = testing::scratch_dir("acceptance_det" + std::to_string(r));
    model::JointModel m(cfg);
    train::train(m, samples, {dir, true, {}});
    for (auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) trees[r][fs::relative(e.path(), dir)] = slurp(e.path());
  }
  const bool has_files = trees[0].count("loss.csv") && trees[0].size() > 2;
  return {has_files && trees[0] == trees[1],
          std::to_string(trees[0].size()) + " files compared byte for byte (loss.csv and checkpoint)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> selected;
  app.add_option("--criterion,-c", selected, "criteria to run (default: all)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"gradient suite", criterion1}},
      {2, {"metric oracle suite", criterion2}},
      {3, {"unit example suite", criterion3}},
      {4, {"overfit run", criterion4}},
      {5, {"iteration-depth trend", criterion5}},
      {6, {"duality-loss trend", criterion6}},
      {7, {"spatial gradient band width", criterion7}},
      {8, {"determinism", criterion8}},
  };
  bool all = true;
  for (int c : selected) {
    const auto& [name, fn] = criteria.at(c);
    Outcome o{false, ""};
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << name << "): " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
