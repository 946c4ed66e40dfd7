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

// Helpers shared by the test binaries: random tensors, a central-difference
// gradient checker and small brute-force oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pyrseg/tensor.hpp"

namespace pyrseg::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

inline Tensor leaf(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t failures = 0;
  // Coordinates where a relu/abs/clip kink lies within h of the point; the
  // analytic value is confirmed with a step of h/10 or h/100 instead.
  std::size_t kinks = 0;
  double worst_rel = 0.0;
  std::string first_failure;

  bool ok() const { return failures == 0; }
};

/// Compares analytic gradients of the scalar f(inputs) with central
/// differences (step h) on every coordinate of every input, or on `stride`
/// spaced coordinates when stride > 1. A nonzero max_per_input widens the
/// stride per input so at most that many coordinates of it are visited.
/// Agreement: |a - n| <= abs_tol + rel_tol * |n|.
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-5,
                                  double rel_tol = 1e-3, double abs_tol = 1e-6, std::size_t stride = 1,
                                  std::size_t max_per_input = 0) {
  for (auto& t : inputs) t.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    auto g = t.grad();
    analytic.emplace_back(t.numel(), 0.0);
    if (!g.empty()) std::copy(g.begin(), g.end(), analytic.back().begin());
  }
  GradCheckResult r;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto v = inputs[i].mutable_values();
    std::size_t step = stride;
    if (max_per_input > 0) step = std::max(step, (v.size() + max_per_input - 1) / max_per_input);
    for (std::size_t j = 0; j < v.size(); j += step) {
      const double orig = v[j];
      double plus = 0, minus = 0;
      {
        NoGradGuard guard;
        v[j] = orig + h;
        plus = f().item();
        v[j] = orig - h;
        minus = f().item();
        v[j] = orig;
      }
      const double numeric = (plus - minus) / (2 * h);
      const double a = analytic[i][j];
      const double err = std::abs(a - numeric);
      ++r.checked;
      bool ok = err <= abs_tol + rel_tol * std::abs(numeric);
      if (!ok) {
        // Retry with smaller steps: a smooth mismatch persists, a kink
        // within h disappears once the step no longer straddles it.
        NoGradGuard guard;
        for (double hs : {h / 10, h / 100}) {
          v[j] = orig + hs;
          const double p = f().item();
          v[j] = orig - hs;
          const double m = f().item();
          v[j] = orig;
          const double refined = (p - m) / (2 * hs);
          if (std::abs(a - refined) <= abs_tol + rel_tol * std::abs(refined)) {
            ++r.kinks;
            ok = true;
            break;
          }
        }
      } else if (std::abs(numeric) > 0) {
        r.worst_rel = std::max(r.worst_rel, err / std::abs(numeric));
      }
      if (!ok) {
        if (r.failures == 0) {
          r.first_failure = "input " + std::to_string(i) + " index " + std::to_string(j) +
                            ": analytic " + std::to_string(a) + " vs numeric " + std::to_string(numeric);
        }
        ++r.failures;
      }
    }
  }
  return r;
}

// Direct sliding-window convolution.
inline std::vector<double> conv_oracle(const Tensor& in, const Tensor& w, const std::vector<double>& bias,
                                       std::size_t stride, std::size_t pad, std::size_t groups) {
  const auto& is = in.shape();
  const auto& ws = w.shape();
  const std::size_t n = is[0], cin = is[1], h = is[2], wd = is[3];
  const std::size_t cout = ws[0], cpg = ws[1], kh = ws[2], kw = ws[3];
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t opg = cout / groups;
  std::vector<double> out(n * cout * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < cout; ++oc)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double s = bias.empty() ? 0.0 : bias[oc];
          const std::size_t g = oc / opg;
          for (std::size_t ic = 0; ic < cpg; ++ic)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                s += in.at({b, g * cpg + ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)}) *
                     w.at({oc, ic, ky, kx});
              }
          out[((b * cout + oc) * oh + y) * ow + x] = s;
        }
  (void)cin;
  return out;
}

// Mean over the in-bounds part of each k x k window of one plane.
inline std::vector<double> box_mean_oracle(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                           std::size_t k) {
  std::vector<double> out(h * w);
  const long r = static_cast<long>(k / 2);
  for (long y = 0; y < static_cast<long>(h); ++y)
    for (long x = 0; x < static_cast<long>(w); ++x) {
      double s = 0;
      int c = 0;
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
          s += plane[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
          ++c;
        }
      out[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = s / c;
    }
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("pyrseg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace pyrseg::testing
