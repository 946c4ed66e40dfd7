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

#include <cmath>
#include <random>

#include "pyrseg/error.hpp"
#include "pyrseg/model.hpp"
#include "support.hpp"

using namespace pyrseg;
using namespace pyrseg::model;
using pyrseg::testing::grad_check;
using pyrseg::testing::leaf;
using pyrseg::testing::random_tensor;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.values()[i] != b.values()[i]) return false;
  return true;
}

// Per-(n, c) mean of an [N,C,H,W] tensor, by direct summation.
std::vector<double> channel_means(const Tensor& t) {
  const auto& s = t.shape();
  const std::size_t plane = s[2] * s[3];
  std::vector<double> out(s[0] * s[1], 0.0);
  for (std::size_t nc = 0; nc < out.size(); ++nc) {
    for (std::size_t q = 0; q < plane; ++q) out[nc] += t.values()[nc * plane + q];
    out[nc] /= static_cast<double>(plane);
  }
  return out;
}

void zero_contexts(PcmParams& p, bool zero_bias) {
  for (auto& step : p.steps)
    for (auto& per_level : step.contexts)
      for (auto& per_src : per_level)
        for (auto& cc : per_src) {
          for (auto& w : cc.conv.weight.mutable_values()) w = 0.0;
          if (zero_bias)
            for (auto& b : cc.conv.bias.mutable_values()) b = 0.0;
        }
}

ConvLayer make_conv(std::size_t c, std::size_t g, double w, double b) {
  return ConvLayer{Tensor({c, c, g, g}, w), Tensor({c}, b), {}};
}

}  // namespace

TEST_CASE("backbone pyramid shapes") {
  Rng rng(1);
  Backbone bb(16, rng);
  std::mt19937_64 r(2);
  auto p64 = bb.encode(random_tensor({2, 3, 64, 64}, r, 0, 1), false);
  CHECK(p64.levels[0].shape() == Shape{2, 16, 4, 4});
  CHECK(p64.levels[1].shape() == Shape{2, 16, 8, 8});
  CHECK(p64.levels[2].shape() == Shape{2, 16, 16, 16});
  auto p16 = bb.encode(random_tensor({1, 3, 16, 16}, r, 0, 1), false);
  CHECK(p16.levels[0].shape() == Shape{1, 16, 1, 1});
  CHECK(p16.levels[1].shape() == Shape{1, 16, 2, 2});
  CHECK(p16.levels[2].shape() == Shape{1, 16, 4, 4});
  auto prect = bb.encode(random_tensor({1, 3, 32, 48}, r, 0, 1), false);
  CHECK(prect.levels[0].shape() == Shape{1, 16, 2, 3});
  CHECK(prect.levels[2].shape() == Shape{1, 16, 8, 12});
  CHECK_THROWS_AS(bb.encode(Tensor({1, 3, 65, 64}), false), InvalidArgument);
  CHECK_THROWS_AS(bb.encode(Tensor({1, 1, 64, 64}), false), InvalidArgument);
}

TEST_CASE("backbone encode is deterministic") {
  Rng rng(3);
  Backbone bb(8, rng);
  std::mt19937_64 r(4);
  auto img = random_tensor({1, 3, 32, 32}, r, 0, 1);
  auto a = bb.encode(img, false), b = bb.encode(img, false);
  for (std::size_t t = 0; t < kLevels; ++t) CHECK(bit_equal(a.levels[t], b.levels[t]));
}

TEST_CASE("patch_context examples") {
  std::mt19937_64 r(5);
  const std::size_t c = 3;
  auto feat = random_tensor({2, c, 6, 6}, r);
  SUBCASE("G=1 identity conv gives the global mean") {
    Tensor w({c, c, 1, 1}, 0.0);
    for (std::size_t i = 0; i < c; ++i) w.mutable_values()[i * c + i] = 1.0;
    auto out = patch_context(feat, 1, ConvLayer{w, Tensor({c}, 0.0), {}});
    CHECK(out.shape() == Shape{2, c, 1, 1});
    const auto means = channel_means(feat);
    for (std::size_t i = 0; i < means.size(); ++i) CHECK(out.values()[i] == doctest::Approx(means[i]).epsilon(1e-12));
  }
  SUBCASE("constant feature propagates to v*w*C*G^2") {
    const double v = 0.7, w = -0.3;
    for (std::size_t g : {1, 3, 5}) {
      auto out = patch_context(Tensor({1, c, 5, 5}, v), g, make_conv(c, g, w, 0.0));
      for (double x : vals(out)) CHECK(x == doctest::Approx(v * w * c * g * g).epsilon(1e-12));
    }
  }
  SUBCASE("zero weights give the bias") {
    Tensor b({c}, std::vector<double>{0.5, -1.0, 2.0});
    auto out = patch_context(feat, 3, ConvLayer{Tensor({c, c, 3, 3}, 0.0), b, {}});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t ch = 0; ch < c; ++ch) CHECK(out.values()[n * c + ch] == b.values()[ch]);
  }
  SUBCASE("kernel size must match the grid") {
    CHECK_THROWS_AS(patch_context(feat, 3, make_conv(c, 1, 1.0, 0.0)), InvalidArgument);
    CHECK_THROWS_AS(patch_context(feat, 0, make_conv(c, 1, 1.0, 0.0)), InvalidArgument);
  }
}

TEST_CASE("context_vector examples") {
  std::mt19937_64 r(6);
  const std::size_t c = 2;
  SUBCASE("zero convs leave the global mean") {
    auto src = random_tensor({2, c, 7, 7}, r);
    std::vector<ContextConv> convs;
    for (std::size_t g : {1, 3, 5, 7}) convs.push_back({g, make_conv(c, g, 0.0, 0.0)});
    auto out = context_vector(src, convs);
    const auto means = channel_means(src);
    for (std::size_t i = 0; i < means.size(); ++i) CHECK(out.values()[i] == doctest::Approx(means[i]).epsilon(1e-12));
  }
  SUBCASE("zero source gives the sum of biases") {
    std::vector<ContextConv> convs;
    double bias_sum = 0;
    for (std::size_t g : {1, 3, 5, 7}) {
      convs.push_back({g, make_conv(c, g, 0.4, 0.1 * static_cast<double>(g))});
      bias_sum += 0.1 * static_cast<double>(g);
    }
    for (double x : vals(context_vector(Tensor({1, c, 7, 7}, 0.0), convs)))
      CHECK(x == doctest::Approx(bias_sum).epsilon(1e-12));
  }
  SUBCASE("grids {1} on a 2x2 source by hand") {
    // Channel 0 = [1,2;3,4] (mean 2.5), channel 1 = [0,0;4,4] (mean 2).
    Tensor src({1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 0, 0, 4, 4});
    // W = [[1,2],[3,4]], b = (0.5, -0.5).
    ConvLayer conv{Tensor({2, 2, 1, 1}, std::vector<double>{1, 2, 3, 4}),
                   Tensor({2}, std::vector<double>{0.5, -0.5}), {}};
    std::vector<ContextConv> convs{{1, conv}};
    auto out = context_vector(src, convs);
    // mean + W mean + b: (2.5 + 2.5 + 4 + 0.5, 2 + 7.5 + 8 - 0.5).
    CHECK(out.values()[0] == doctest::Approx(9.5).epsilon(1e-15));
    CHECK(out.values()[1] == doctest::Approx(17.0).epsilon(1e-15));
  }
}

TEST_CASE("refine_level examples") {
  std::mt19937_64 r(7);
  auto in = random_tensor({2, 3, 4, 4}, r);
  std::vector<Tensor> zeros{Tensor({2, 3, 1, 1}, 0.0), Tensor({2, 3, 1, 1}, 0.0)};
  CHECK(bit_equal(refine_level(in, zeros, 1), in));
  std::vector<Tensor> one{Tensor({2, 3, 1, 1}, 1.0)};
  auto doubled = refine_level(in, one, 0);
  for (std::size_t i = 0; i < in.numel(); ++i) CHECK(doubled.values()[i] == 2.0 * in.values()[i]);
  auto a = random_tensor({2, 3, 1, 1}, r), b = random_tensor({2, 3, 1, 1}, r);
  std::vector<Tensor> ab{a, b};
  auto out = refine_level(in, ab, 1);
  for (std::size_t nc = 0; nc < 6; ++nc)
    for (std::size_t q = 0; q < 16; ++q) {
      const double x = in.values()[nc * 16 + q];
      CHECK(out.values()[nc * 16 + q] == doctest::Approx(x * (1 + a.values()[nc] + b.values()[nc])).epsilon(1e-14));
    }
  CHECK_THROWS_AS(refine_level(in, ab, 2), InvalidArgument);
}

TEST_CASE("zero-context identity on zero-mean sources") {
  Rng rng(8);
  PcmParams p(3, 1, {1, 3, 5, 7}, rng);
  zero_contexts(p, true);
  std::mt19937_64 r(9);
  auto src = random_tensor({1, 3, 8, 8}, r);
  // Center each channel.
  const auto means = channel_means(src);
  auto sv = src.mutable_values();
  for (std::size_t nc = 0; nc < 3; ++nc)
    for (std::size_t q = 0; q < 64; ++q) sv[nc * 64 + q] -= means[nc];
  std::vector<Tensor> ctx;
  for (std::size_t src_level = 0; src_level <= 2; ++src_level)
    ctx.push_back(context_vector(src, p.steps[0].contexts[2][src_level]));
  auto in = random_tensor({1, 3, 8, 8}, r);
  auto out = refine_level(in, ctx, 2);
  for (std::size_t i = 0; i < in.numel(); ++i) CHECK(std::abs(out.values()[i] - in.values()[i]) <= 1e-15);
}

TEST_CASE("pcm parameters default to grids 1,3,5,7 with C-channel outputs") {
  Rng rng(10);
  ModelConfig cfg;
  PcmParams p(cfg.channels, cfg.steps, cfg.grids, rng);
  CHECK(p.grids == std::vector<std::size_t>{1, 3, 5, 7});
  CHECK(p.steps.size() == 4);
  for (auto& step : p.steps)
    for (std::size_t t = 1; t < kLevels; ++t) {
      CHECK(step.contexts[t].size() == t + 1);
      for (auto& per_src : step.contexts[t]) {
        REQUIRE(per_src.size() == 4);
        for (auto& cc : per_src)
          CHECK(cc.conv.weight.shape() == Shape{cfg.channels, cfg.channels, cc.grid, cc.grid});
      }
    }
}

TEST_CASE("step ownership alternates") {
  CHECK(step_owner(1, StepParity::BoundaryOdd) == Task::Boundary);
  CHECK(step_owner(2, StepParity::BoundaryOdd) == Task::Segmentation);
  CHECK(step_owner(1, StepParity::SegOdd) == Task::Segmentation);
  CHECK(step_owner(4, StepParity::SegOdd) == Task::Boundary);
}

namespace {

struct Fixture {
  Rng rng{11};
  Backbone backbone{4, rng};
  PcmParams params{4, 8, {1, 3, 5, 7}, rng};
  PyramidFeatures pyramid;

  explicit Fixture(std::size_t n = 2) {
    std::mt19937_64 r(12);
    pyramid = backbone.encode(random_tensor({n, 3, 32, 32}, r, 0, 1), false);
  }
};

}  // namespace

TEST_CASE("schedule: S=1 trains one task and the other reads step 0") {
  Fixture fx;
  auto st = run_schedule(fx.pyramid, fx.params, 1, StepParity::BoundaryOdd, false);
  CHECK(st.boundary.last_step() == 1);
  CHECK(st.segmentation.last_step() == 0);
  for (std::size_t t = 0; t < kLevels; ++t) CHECK(st.segmentation.latest()[t].same_node(fx.pyramid.levels[t]));
  auto swapped = run_schedule(fx.pyramid, fx.params, 1, StepParity::SegOdd, false);
  CHECK(swapped.segmentation.last_step() == 1);
  CHECK(swapped.boundary.last_step() == 0);
  CHECK_THROWS_AS(run_schedule(fx.pyramid, fx.params, 0, StepParity::BoundaryOdd, false), InvalidArgument);
  CHECK_THROWS_AS(run_schedule(fx.pyramid, fx.params, 9, StepParity::BoundaryOdd, false), InvalidArgument);
}

TEST_CASE("schedule: step indices, shapes and determinism") {
  Fixture fx;
  for (std::size_t steps = 1; steps <= 8; ++steps) {
    auto st = run_schedule(fx.pyramid, fx.params, steps, StepParity::BoundaryOdd, false);
    std::size_t expect = 0;
    for (const auto* stream : {&st.boundary, &st.segmentation}) {
      for (const auto& [s, maps] : stream->step_maps) {
        CHECK((s == 0 || step_owner(s, StepParity::BoundaryOdd) == stream->task));
        for (std::size_t t = 0; t < kLevels; ++t) CHECK(maps[t].shape() == fx.pyramid.levels[t].shape());
        ++expect;
      }
    }
    CHECK(expect == steps + 2);
  }
  auto a = run_schedule(fx.pyramid, fx.params, 4, StepParity::BoundaryOdd, false);
  auto b = run_schedule(fx.pyramid, fx.params, 4, StepParity::BoundaryOdd, false);
  for (std::size_t t = 0; t < kLevels; ++t) {
    CHECK(bit_equal(a.segmentation.latest()[t], b.segmentation.latest()[t]));
    CHECK(bit_equal(a.boundary.latest()[t], b.boundary.latest()[t]));
  }
}

TEST_CASE("schedule: zeroed context convs match the unrolled oracle at S=4") {
  Fixture fx;
  zero_contexts(fx.params, true);
  auto st = run_schedule(fx.pyramid, fx.params, 4, StepParity::BoundaryOdd, false);
  // maps[stream][s][t]; stream 0 = boundary (odd steps), 1 = segmentation.
  std::array<std::map<std::size_t, std::array<std::vector<double>, kLevels>>, 2> maps;
  for (std::size_t t = 0; t < kLevels; ++t) maps[0][0][t] = maps[1][0][t] = vals(fx.pyramid.levels[t]);
  const auto& lv = fx.pyramid.levels;
  for (std::size_t s = 1; s <= 4; ++s) {
    const std::size_t own = s % 2 == 1 ? 0 : 1, other = 1 - own;
    const std::size_t own_prev = s <= 2 ? 0 : s - 2, other_prev = s == 1 ? 0 : s - 1;
    // Level 0 passes through a conv block, taken from the module itself.
    maps[own][s][0] = vals((own == 0 ? st.boundary : st.segmentation).step_maps.at(s)[0]);
    for (std::size_t t = 1; t < kLevels; ++t) {
      const std::size_t n = lv[t].dim(0), c = lv[t].dim(1), plane = lv[t].dim(2) * lv[t].dim(3);
      std::vector<double> factor(n * c, 1.0);
      for (std::size_t src = 0; src <= t; ++src) {
        const auto& m = maps[other][other_prev][src];
        const std::size_t sp = lv[src].dim(2) * lv[src].dim(3);
        for (std::size_t nc = 0; nc < n * c; ++nc) {
          double acc = 0;
          for (std::size_t q = 0; q < sp; ++q) acc += m[nc * sp + q];
          factor[nc] += acc / static_cast<double>(sp);
        }
      }
      const auto& prev = maps[own][own_prev][t];
      std::vector<double> next(prev.size());
      for (std::size_t nc = 0; nc < n * c; ++nc)
        for (std::size_t q = 0; q < plane; ++q) next[nc * plane + q] = prev[nc * plane + q] * factor[nc];
      maps[own][s][t] = next;
    }
  }
  for (std::size_t s = 1; s <= 4; ++s) {
    const auto& stream = s % 2 == 1 ? st.boundary : st.segmentation;
    const std::size_t own = s % 2 == 1 ? 0 : 1;
    for (std::size_t t = 1; t < kLevels; ++t) {
      const auto got = vals(stream.step_maps.at(s)[t]);
      const auto& want = maps[own][s][t];
      REQUIRE(got.size() == want.size());
      double worst = 0;
      for (std::size_t i = 0; i < got.size(); ++i)
        worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i])));
      CAPTURE(s);
      CAPTURE(t);
      CHECK(worst <= 1e-12);
    }
  }
}

TEST_CASE("schedule: taint propagates along the alternating pattern") {
  Fixture fx;
  auto base = run_schedule(fx.pyramid, fx.params, 4, StepParity::BoundaryOdd, false);
  // Replay the schedule by hand so a boundary step-1 map can be perturbed.
  auto replay = [&](const LevelMaps& bnd1) {
    std::map<std::size_t, LevelMaps> seg, bnd;
    bnd[1] = bnd1;
    seg[2] = step_forward(fx.params.steps[1], fx.pyramid.levels, bnd[1], false);
    bnd[3] = step_forward(fx.params.steps[2], bnd[1], seg[2], false);
    seg[4] = step_forward(fx.params.steps[3], seg[2], bnd[3], false);
    return std::pair{seg, bnd};
  };
  auto [seg, bnd] = replay(base.boundary.step_maps.at(1));
  for (std::size_t t = 0; t < kLevels; ++t) {
    CHECK(bit_equal(seg[2][t], base.segmentation.step_maps.at(2)[t]));
    CHECK(bit_equal(bnd[3][t], base.boundary.step_maps.at(3)[t]));
    CHECK(bit_equal(seg[4][t], base.segmentation.step_maps.at(4)[t]));
  }
  for (std::size_t src = 0; src < kLevels; ++src) {
    LevelMaps tainted = base.boundary.step_maps.at(1);
    tainted[src] = tainted[src].clone();
    tainted[src].mutable_values()[0] += 0.25;
    auto [seg_t, bnd_t] = replay(tainted);
    CAPTURE(src);
    // Step-2 segmentation levels t >= src read the tainted source.
    for (std::size_t t = 1; t < kLevels; ++t) CHECK(bit_equal(seg_t[2][t], seg[2][t]) == (t < src));
    // Level 0 only depends on its own stream.
    CHECK(bit_equal(seg_t[2][0], seg[2][0]));
    CHECK_FALSE(bit_equal(seg_t[4][2], seg[4][2]));
  }
}

TEST_CASE("end-to-end gradient reaches the input image") {
  ModelConfig cfg;
  cfg.channels = 4;
  cfg.classes = 3;
  cfg.image_size = 16;
  JointModel model(cfg);
  std::mt19937_64 r(13);
  auto img = leaf(random_tensor({1, 3, 16, 16}, r, 0, 1));
  auto w1 = random_tensor({1, 3, 16, 16}, r), w2 = random_tensor({1, 3, 16, 16}, r);
  for (bool training : {false, true}) {
    CAPTURE(training);
    auto f = [&] {
      auto o = model.forward(img, training);
      return add(sum(mul(o.mask_prob, w1)), sum(mul(o.boundary_prob, w2)));
    };
    img.zero_grad();
    f().backward();
    REQUIRE(img.has_grad());
    double norm = 0;
    for (double g : img.grad()) {
      CHECK(std::isfinite(g));
      norm += g * g;
    }
    CHECK(norm > 0.0);
    auto res = grad_check(f, {img});
    CHECK_MESSAGE(res.ok(), res.first_failure);
    CHECK(res.checked == img.numel());
  }
}
