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

#include "pyrseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pyrseg/error.hpp"

namespace pyrseg {

namespace {

struct Dims4 {
  std::size_t n, c, h, w;
};

Dims4 dims4(const Tensor& t, const char* what) {
  const auto& s = t.shape();
  if (s.size() != 4) {
    throw InvalidArgument(std::string(what) + " expects a rank-4 [N,C,H,W] tensor, got " + shape_str(s));
  }
  return {s[0], s[1], s[2], s[3]};
}

// Inclusive-exclusive bounds of patch i of `grid` along an axis of length len.
std::pair<std::size_t, std::size_t> patch_bounds(std::size_t i, std::size_t grid, std::size_t len) {
  std::size_t lo = i * len / grid;
  std::size_t hi = (i + 1) * len / grid;
  if (hi <= lo) hi = lo + 1;
  return {lo, hi};
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opt) {
  const auto in = dims4(input, "conv2d input");
  const auto& ws = weight.shape();
  if (ws.size() != 4) throw InvalidArgument("conv2d weight must be rank 4, got " + shape_str(ws));
  const std::size_t groups = opt.groups;
  if (groups == 0 || opt.stride == 0) throw InvalidArgument("conv2d stride and groups must be >= 1");
  const std::size_t cout = ws[0], cin_g = ws[1], kh = ws[2], kw = ws[3];
  if (kh == 0 || kw == 0) throw InvalidArgument("conv2d kernel size must be >= 1");
  if (in.c % groups != 0 || cout % groups != 0) {
    throw InvalidArgument("conv2d channel counts (in " + std::to_string(in.c) + ", out " +
                          std::to_string(cout) + ") not divisible by groups " + std::to_string(groups));
  }
  if (cin_g * groups != in.c) {
    throw InvalidArgument("conv2d input " + shape_str(input.shape()) + " does not match weight " +
                          shape_str(ws) + " with groups " + std::to_string(groups));
  }
  if (bias.defined() && bias.numel() != cout) {
    throw InvalidArgument("conv2d bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(ws));
  }
  const long pad = static_cast<long>(opt.padding);
  const long stride = static_cast<long>(opt.stride);
  if (in.h + 2 * opt.padding < kh || in.w + 2 * opt.padding < kw) {
    throw InvalidArgument("conv2d kernel " + shape_str(ws) + " larger than padded input " +
                          shape_str(input.shape()));
  }
  const std::size_t oh = (in.h + 2 * opt.padding - kh) / opt.stride + 1;
  const std::size_t ow = (in.w + 2 * opt.padding - kw) / opt.stride + 1;
  const std::size_t cout_g = cout / groups;
  const long H = static_cast<long>(in.h), W = static_cast<long>(in.w);

  // Valid output range [lo, hi) along one axis for kernel tap k.
  auto out_range = [=](long k, long len, std::size_t out_len) {
    long lo = 0;
    if (k < pad) lo = (pad - k + stride - 1) / stride;
    long hi_in = len - 1 + pad - k;  // largest o*stride allowed
    long hi = hi_in < 0 ? 0 : hi_in / stride + 1;
    hi = std::min<long>(hi, static_cast<long>(out_len));
    return std::pair<long, long>(lo, std::max(lo, hi));
  };

  std::vector<double> out(in.n * cout * oh * ow, 0.0);
  const auto x = input.values();
  const auto w = weight.values();
  const auto b = bias.defined() ? bias.values() : std::span<const double>{};

  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oc = 0; oc < cout; ++oc) {
      double* o = out.data() + (n * cout + oc) * oh * ow;
      if (!b.empty()) std::fill(o, o + oh * ow, b[oc]);
      const std::size_t grp = oc / cout_g;
      for (std::size_t icg = 0; icg < cin_g; ++icg) {
        const std::size_t ic = grp * cin_g + icg;
        const double* xi = x.data() + (n * in.c + ic) * in.h * in.w;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          auto [oy0, oy1] = out_range(static_cast<long>(ky), H, oh);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wv = w[((oc * cin_g + icg) * kh + ky) * kw + kx];
            auto [ox0, ox1] = out_range(static_cast<long>(kx), W, ow);
            for (long oy = oy0; oy < oy1; ++oy) {
              const long iy = oy * stride - pad + static_cast<long>(ky);
              const double* xrow = xi + iy * W;
              double* orow = o + oy * static_cast<long>(ow);
              for (long ox = ox0; ox < ox1; ++ox) {
                orow[ox] += wv * xrow[ox * stride - pad + static_cast<long>(kx)];
              }
            }
          }
        }
      }
    }
  }

  Shape out_shape{in.n, cout, oh, ow};
  return make_op_result(
      out_shape, std::move(out), {input, weight, bias},
      [=](std::span<const double> g) {
        auto gx = grad_sink(input);
        auto gw = grad_sink(weight);
        auto gb = grad_sink(bias);
        const auto xv = input.values();
        const auto wv_all = weight.values();
        for (std::size_t n = 0; n < in.n; ++n) {
          for (std::size_t oc = 0; oc < cout; ++oc) {
            const double* go = g.data() + (n * cout + oc) * oh * ow;
            if (!gb.empty()) {
              double s = 0.0;
              for (std::size_t i = 0; i < oh * ow; ++i) s += go[i];
              gb[oc] += s;
            }
            const std::size_t grp = oc / cout_g;
            for (std::size_t icg = 0; icg < cin_g; ++icg) {
              const std::size_t ic = grp * cin_g + icg;
              const std::size_t in_off = (n * in.c + ic) * in.h * in.w;
              for (std::size_t ky = 0; ky < kh; ++ky) {
                auto [oy0, oy1] = out_range(static_cast<long>(ky), H, oh);
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::size_t widx = ((oc * cin_g + icg) * kh + ky) * kw + kx;
                  const double wv = wv_all[widx];
                  auto [ox0, ox1] = out_range(static_cast<long>(kx), W, ow);
                  double wacc = 0.0;
                  for (long oy = oy0; oy < oy1; ++oy) {
                    const long iy = oy * stride - pad + static_cast<long>(ky);
                    const std::size_t row = in_off + static_cast<std::size_t>(iy * W);
                    const double* grow = go + oy * static_cast<long>(ow);
                    for (long ox = ox0; ox < ox1; ++ox) {
                      const long ix = ox * stride - pad + static_cast<long>(kx);
                      if (!gx.empty()) gx[row + ix] += wv * grow[ox];
                      wacc += xv[row + ix] * grow[ox];
                    }
                  }
                  if (!gw.empty()) gw[widx] += wacc;
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// pooling / resampling

Tensor adaptive_avg_pool(const Tensor& input, std::size_t grid) {
  const auto d = dims4(input, "adaptive_avg_pool");
  if (grid < 1) throw InvalidArgument("adaptive_avg_pool grid must be >= 1");
  if (d.h == 0 || d.w == 0) throw InvalidArgument("adaptive_avg_pool needs a non-empty spatial extent");
  std::vector<double> out(d.n * d.c * grid * grid);
  const auto x = input.values();
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const double* xi = x.data() + nc * d.h * d.w;
    for (std::size_t py = 0; py < grid; ++py) {
      auto [y0, y1] = patch_bounds(py, grid, d.h);
      for (std::size_t px = 0; px < grid; ++px) {
        auto [x0, x1] = patch_bounds(px, grid, d.w);
        double s = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t xx = x0; xx < x1; ++xx) s += xi[y * d.w + xx];
        out[(nc * grid + py) * grid + px] = s / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return make_op_result({d.n, d.c, grid, grid}, std::move(out), {input},
                        [=](std::span<const double> g) {
                          auto gx = grad_sink(input);
                          for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
                            double* gi = gx.data() + nc * d.h * d.w;
                            for (std::size_t py = 0; py < grid; ++py) {
                              auto [y0, y1] = patch_bounds(py, grid, d.h);
                              for (std::size_t px = 0; px < grid; ++px) {
                                auto [x0, x1] = patch_bounds(px, grid, d.w);
                                const double v = g[(nc * grid + py) * grid + px] /
                                                 static_cast<double>((y1 - y0) * (x1 - x0));
                                for (std::size_t y = y0; y < y1; ++y)
                                  for (std::size_t xx = x0; xx < x1; ++xx) gi[y * d.w + xx] += v;
                              }
                            }
                          }
                        });
}

Tensor avg_pool_same(const Tensor& input, std::size_t kernel) {
  const auto d = dims4(input, "avg_pool_same");
  if (kernel == 0 || kernel % 2 == 0) {
    throw InvalidArgument("avg_pool_same kernel must be odd and >= 1, got " + std::to_string(kernel));
  }
  const long r = static_cast<long>(kernel / 2);
  const long H = static_cast<long>(d.h), W = static_cast<long>(d.w);
  auto window = [=](long c, long len) {
    return std::pair<long, long>(std::max(0L, c - r), std::min(len, c + r + 1));
  };
  std::vector<double> out(input.numel());
  const auto x = input.values();
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const double* xi = x.data() + nc * d.h * d.w;
    double* oi = out.data() + nc * d.h * d.w;
    for (long y = 0; y < H; ++y) {
      auto [y0, y1] = window(y, H);
      for (long xx = 0; xx < W; ++xx) {
        auto [x0, x1] = window(xx, W);
        double s = 0.0;
        for (long yy = y0; yy < y1; ++yy)
          for (long xq = x0; xq < x1; ++xq) s += xi[yy * W + xq];
        oi[y * W + xx] = s / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return make_op_result(input.shape(), std::move(out), {input}, [=](std::span<const double> g) {
    auto gx = grad_sink(input);
    for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
      const double* go = g.data() + nc * d.h * d.w;
      double* gi = gx.data() + nc * d.h * d.w;
      for (long y = 0; y < H; ++y) {
        auto [y0, y1] = window(y, H);
        for (long xx = 0; xx < W; ++xx) {
          auto [x0, x1] = window(xx, W);
          const double v = go[y * W + xx] / static_cast<double>((y1 - y0) * (x1 - x0));
          for (long yy = y0; yy < y1; ++yy)
            for (long xq = x0; xq < x1; ++xq) gi[yy * W + xq] += v;
        }
      }
    }
  });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double frac;
};

std::vector<Tap> align_corner_taps(std::size_t in_len, std::size_t out_len) {
  std::vector<Tap> taps(out_len);
  for (std::size_t o = 0; o < out_len; ++o) {
    double src = out_len == 1 ? 0.0
                              : static_cast<double>(o) * static_cast<double>(in_len - 1) /
                                    static_cast<double>(out_len - 1);
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in_len - 1) i0 = in_len - 1;
    std::size_t i1 = std::min(i0 + 1, in_len - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

Tensor bilinear_upsample(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  const auto d = dims4(input, "bilinear_upsample");
  if (out_h == 0 || out_w == 0) throw InvalidArgument("bilinear_upsample output size must be non-zero");
  if (out_h < d.h || out_w < d.w) {
    throw InvalidArgument("bilinear_upsample only upsamples: " + shape_str(input.shape()) + " to " +
                          std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  auto ty = align_corner_taps(d.h, out_h);
  auto tx = align_corner_taps(d.w, out_w);
  std::vector<double> out(d.n * d.c * out_h * out_w);
  const auto x = input.values();
  for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
    const double* xi = x.data() + nc * d.h * d.w;
    double* oi = out.data() + nc * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const double top = xi[a.i0 * d.w + b.i0] * (1 - b.frac) + xi[a.i0 * d.w + b.i1] * b.frac;
        const double bot = xi[a.i1 * d.w + b.i0] * (1 - b.frac) + xi[a.i1 * d.w + b.i1] * b.frac;
        oi[oy * out_w + ox] = top * (1 - a.frac) + bot * a.frac;
      }
    }
  }
  return make_op_result({d.n, d.c, out_h, out_w}, std::move(out), {input},
                        [=](std::span<const double> g) {
                          auto gx = grad_sink(input);
                          for (std::size_t nc = 0; nc < d.n * d.c; ++nc) {
                            double* gi = gx.data() + nc * d.h * d.w;
                            const double* go = g.data() + nc * out_h * out_w;
                            for (std::size_t oy = 0; oy < out_h; ++oy) {
                              const auto& a = ty[oy];
                              for (std::size_t ox = 0; ox < out_w; ++ox) {
                                const auto& b = tx[ox];
                                const double v = go[oy * out_w + ox];
                                gi[a.i0 * d.w + b.i0] += v * (1 - a.frac) * (1 - b.frac);
                                gi[a.i0 * d.w + b.i1] += v * (1 - a.frac) * b.frac;
                                gi[a.i1 * d.w + b.i0] += v * a.frac * (1 - b.frac);
                                gi[a.i1 * d.w + b.i1] += v * a.frac * b.frac;
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

enum class BinOp { Add, Sub, Mul, AbsDiff };

// Returns the spatial block size b is broadcast over (1 when shapes match).
std::size_t broadcast_block(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return 1;
  if (sa.size() == 4 && sb.size() == 4 && sa[0] == sb[0] && sa[1] == sb[1] && sb[2] == 1 && sb[3] == 1) {
    return sa[2] * sa[3];
  }
  throw InvalidArgument("incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
}

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  const std::size_t block = broadcast_block(a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double y = bv[i / block];
    switch (op) {
      case BinOp::Add: out[i] = av[i] + y; break;
      case BinOp::Sub: out[i] = av[i] - y; break;
      case BinOp::Mul: out[i] = av[i] * y; break;
      case BinOp::AbsDiff: out[i] = std::abs(av[i] - y); break;
    }
  }
  return make_op_result(a.shape(), std::move(out), {a, b}, [=](std::span<const double> g) {
    auto ga = grad_sink(a);
    auto gb = grad_sink(b);
    const auto x = a.values();
    const auto y = b.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t j = i / block;
      double da = 0.0, db = 0.0;
      switch (op) {
        case BinOp::Add: da = g[i]; db = g[i]; break;
        case BinOp::Sub: da = g[i]; db = -g[i]; break;
        case BinOp::Mul: da = g[i] * y[j]; db = g[i] * x[i]; break;
        case BinOp::AbsDiff: {
          const double diff = x[i] - y[j];
          const double sgn = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
          da = g[i] * sgn;
          db = -g[i] * sgn;
          break;
        }
      }
      if (!ga.empty()) ga[i] += da;
      if (!gb.empty()) gb[j] += db;
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::Mul); }
Tensor abs_diff(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::AbsDiff); }

Tensor scale(const Tensor& a, double factor) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return make_op_result(a.shape(), std::move(out), {a}, [=](std::span<const double> g) {
    auto ga = grad_sink(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor relu(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0 ? xv[i] : 0.0;
  return make_op_result(x.shape(), std::move(out), {x}, [=](std::span<const double> g) {
    auto gx = grad_sink(x);
    const auto v = x.values();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (v[i] > 0) gx[i] += g[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto xv = x.values();
  auto out = std::make_shared<std::vector<double>>(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    // Branches keep exp() from overflowing for large |v|.
    (*out)[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  std::vector<double> copy = *out;
  return make_op_result(x.shape(), std::move(copy), {x}, [=](std::span<const double> g) {
    auto gx = grad_sink(x);
    const auto& y = *out;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor softmax_channels(const Tensor& x) {
  const auto d = dims4(x, "softmax_channels");
  if (d.c < 1) throw InvalidArgument("softmax needs at least one channel");
  const std::size_t plane = d.h * d.w;
  const auto xv = x.values();
  auto out = std::make_shared<std::vector<double>>(xv.size());
  auto& y = *out;
  for (std::size_t n = 0; n < d.n; ++n) {
    const std::size_t base = n * d.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      double mx = xv[base + p];
      for (std::size_t c = 1; c < d.c; ++c) mx = std::max(mx, xv[base + c * plane + p]);
      double s = 0.0;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double e = std::exp(xv[base + c * plane + p] - mx);
        y[base + c * plane + p] = e;
        s += e;
      }
      for (std::size_t c = 0; c < d.c; ++c) y[base + c * plane + p] /= s;
    }
  }
  std::vector<double> copy = y;
  return make_op_result(x.shape(), std::move(copy), {x}, [=](std::span<const double> g) {
    auto gx = grad_sink(x);
    const auto& yv = *out;
    for (std::size_t n = 0; n < d.n; ++n) {
      const std::size_t base = n * d.c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d.c; ++c) dot += g[base + c * plane + p] * yv[base + c * plane + p];
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t i = base + c * plane + p;
          gx[i] += yv[i] * (g[i] - dot);
        }
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op_result({1}, {s}, {x}, [=](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (auto& v : gx) v += g[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  return scale(sum(x), 1.0 / n);
}

Tensor weighted_sum(const std::vector<Tensor>& scalars, const std::vector<double>& weights) {
  if (scalars.size() != weights.size()) throw InvalidArgument("weighted_sum: term/weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].numel() != 1) throw InvalidArgument("weighted_sum: terms must be scalars");
    s += weights[i] * scalars[i].item();
  }
  return make_op_result({1}, {s}, scalars, [=](std::span<const double> g) {
    for (std::size_t i = 0; i < scalars.size(); ++i) {
      auto gs = grad_sink(scalars[i]);
      if (!gs.empty()) gs[0] += weights[i] * g[0];
    }
  });
}

Tensor flip_horizontal(const Tensor& x) {
  const auto& s = x.shape();
  if (s.empty()) throw InvalidArgument("flip_horizontal needs rank >= 1");
  const std::size_t w = s.back();
  const std::size_t rows = x.numel() / std::max<std::size_t>(w, 1);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < w; ++i) out[r * w + i] = xv[r * w + (w - 1 - i)];
  return make_op_result(s, std::move(out), {x}, [=](std::span<const double> g) {
    auto gx = grad_sink(x);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < w; ++i) gx[r * w + (w - 1 - i)] += g[r * w + i];
  });
}

// ---------------------------------------------------------------------------
// normalization

NormState NormState::create(std::size_t channels) {
  NormState s;
  s.gamma = Tensor::ones({channels});
  s.gamma.set_requires_grad(true);
  s.beta = Tensor::zeros({channels});
  s.beta.set_requires_grad(true);
  s.running_mean = Tensor::zeros({channels});
  s.running_var = Tensor::ones({channels});
  return s;
}

namespace {

void check_norm_shapes(const Dims4& d, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.numel() != d.c || beta.numel() != d.c) {
    throw InvalidArgument("norm_affine: " + std::to_string(d.c) + " channels but gamma " +
                          shape_str(gamma.shape()) + ", beta " + shape_str(beta.shape()));
  }
  if (!(eps > 0)) throw InvalidArgument("norm_affine: eps must be > 0");
}

// y = gamma * (x - mu) * inv_std + beta with per-channel mu, inv_std.
// batch_stats selects the backward rule (statistics depend on x or not).
Tensor normalize(const Tensor& input, const Tensor& gamma, const Tensor& beta, std::vector<double> mu,
                 std::vector<double> inv_std, bool batch_stats) {
  const auto d = dims4(input, "norm_affine");
  const std::size_t plane = d.h * d.w;
  const auto x = input.values();
  const auto gm = gamma.values();
  const auto bt = beta.values();
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const std::size_t base = (n * d.c + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const double h = (x[base + p] - mu[c]) * inv_std[c];
        (*xhat)[base + p] = h;
        out[base + p] = gm[c] * h + bt[c];
      }
    }
  }
  const double m = static_cast<double>(d.n * plane);
  return make_op_result(input.shape(), std::move(out), {input, gamma, beta},
                        [=](std::span<const double> g) {
                          auto gx = grad_sink(input);
                          auto gg = grad_sink(gamma);
                          auto gb = grad_sink(beta);
                          const auto gmv = gamma.values();
                          const auto& xh = *xhat;
                          for (std::size_t c = 0; c < d.c; ++c) {
                            double sg = 0.0, sgx = 0.0;
                            for (std::size_t n = 0; n < d.n; ++n) {
                              const std::size_t base = (n * d.c + c) * plane;
                              for (std::size_t p = 0; p < plane; ++p) {
                                sg += g[base + p];
                                sgx += g[base + p] * xh[base + p];
                              }
                            }
                            if (!gg.empty()) gg[c] += sgx;
                            if (!gb.empty()) gb[c] += sg;
                            if (gx.empty()) continue;
                            const double k = gmv[c] * inv_std[c];
                            for (std::size_t n = 0; n < d.n; ++n) {
                              const std::size_t base = (n * d.c + c) * plane;
                              for (std::size_t p = 0; p < plane; ++p) {
                                const std::size_t i = base + p;
                                gx[i] += batch_stats ? k * (g[i] - sg / m - xh[i] * sgx / m) : k * g[i];
                              }
                            }
                          }
                        });
}

void batch_moments(const Tensor& input, std::vector<double>& mu, std::vector<double>& var) {
  const auto d = dims4(input, "norm_affine");
  const std::size_t plane = d.h * d.w;
  const double m = static_cast<double>(d.n * plane);
  const auto x = input.values();
  mu.assign(d.c, 0.0);
  var.assign(d.c, 0.0);
  for (std::size_t c = 0; c < d.c; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t p = 0; p < plane; ++p) s += x[(n * d.c + c) * plane + p];
    mu[c] = s / m;
    double v = 0.0;
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t p = 0; p < plane; ++p) {
        const double t = x[(n * d.c + c) * plane + p] - mu[c];
        v += t * t;
      }
    var[c] = v / m;
  }
}

}  // namespace

Tensor norm_affine(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto d = dims4(input, "norm_affine");
  check_norm_shapes(d, gamma, beta, eps);
  std::vector<double> mu, var;
  batch_moments(input, mu, var);
  std::vector<double> inv(d.c);
  for (std::size_t c = 0; c < d.c; ++c) inv[c] = 1.0 / std::sqrt(var[c] + eps);
  return normalize(input, gamma, beta, std::move(mu), std::move(inv), true);
}

Tensor norm_affine(const Tensor& input, NormState& state, bool training) {
  const auto d = dims4(input, "norm_affine");
  check_norm_shapes(d, state.gamma, state.beta, state.eps);
  if (state.running_mean.numel() != d.c || state.running_var.numel() != d.c) {
    throw InvalidArgument("norm_affine: running statistics do not match " + std::to_string(d.c) + " channels");
  }
  std::vector<double> inv(d.c);
  if (!training) {
    const auto rm = state.running_mean.values();
    const auto rv = state.running_var.values();
    std::vector<double> mu(rm.begin(), rm.end());
    for (std::size_t c = 0; c < d.c; ++c) inv[c] = 1.0 / std::sqrt(rv[c] + state.eps);
    return normalize(input, state.gamma, state.beta, std::move(mu), std::move(inv), false);
  }
  std::vector<double> mu, var;
  batch_moments(input, mu, var);
  const double m = static_cast<double>(d.n * d.h * d.w);
  auto rm = state.running_mean.mutable_values();
  auto rv = state.running_var.mutable_values();
  for (std::size_t c = 0; c < d.c; ++c) {
    const double unbiased = m > 1 ? var[c] * m / (m - 1) : var[c];
    rm[c] = (1 - state.momentum) * rm[c] + state.momentum * mu[c];
    rv[c] = (1 - state.momentum) * rv[c] + state.momentum * unbiased;
    inv[c] = 1.0 / std::sqrt(var[c] + state.eps);
  }
  return normalize(input, state.gamma, state.beta, std::move(mu), std::move(inv), true);
}

}  // namespace pyrseg
