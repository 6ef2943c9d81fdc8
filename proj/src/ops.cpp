// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "voxseg/error.hpp"
#include "voxseg/kernels/kernels.hpp"

namespace voxseg {

std::int64_t conv_output_extent(std::int64_t extent, int kernel, int stride, int padding) {
  const std::int64_t span = extent + 2 * static_cast<std::int64_t>(padding) - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

namespace {

std::vector<float> rounded_fp16(std::span<const float> src) {
  std::vector<float> out(src.size());
  kernels::active().fp16_round(src.data(), out.data(), src.size());
  return out;
}

// Geometry shared by the forward and backward convolution passes. The
// convolution is evaluated as an implicit GEMM over slabs of output rows:
// columns are gathered for a slab ("im2col"), then every output channel is
// accumulated tap by tap with axpy, which keeps the (ci, k0, k1, k2)
// accumulation order of each output element. Padded taps gather zeros; adding
// +0 or -0 to any sum that started at +0 leaves it bit-for-bit unchanged.
struct ConvGeometry {
  std::int64_t cin = 0, cout = 0;
  int k = 1, stride = 1, pad = 0;
  Extent3 in{}, out{};
  std::int64_t taps() const { return cin * k * k * k; }
  std::int64_t out_slab() const { return out[1] * out[2]; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }

  // Slabs (along axis 0) per chunk so the column buffer stays cache sized.
  std::int64_t slabs_per_chunk() const {
    constexpr std::int64_t kBudgetFloats = 1 << 19;
    const std::int64_t per_slab = std::max<std::int64_t>(1, taps() * out_slab());
    return std::clamp<std::int64_t>(kBudgetFloats / per_slab, 1, out[0]);
  }

  // Gathers columns for output slabs [s0, s1) of one sample into col
  // (taps x chunk voxels, row-major).
  void im2col(const float* x, std::int64_t s0, std::int64_t s1, float* col) const {
    const std::int64_t chunk = (s1 - s0) * out_slab();
    const std::int64_t in_voxels = in[0] * in[1] * in[2];
    std::int64_t row = 0;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const float* xp = x + ci * in_voxels;
      for (int k0 = 0; k0 < k; ++k0) {
        for (int k1 = 0; k1 < k; ++k1) {
          for (int k2 = 0; k2 < k; ++k2, ++row) {
            float* dst = col + row * chunk;
            for (std::int64_t o0 = s0; o0 < s1; ++o0) {
              const std::int64_t i0 = o0 * stride + k0 - pad;
              for (std::int64_t o1 = 0; o1 < out[1]; ++o1) {
                const std::int64_t i1 = o1 * stride + k1 - pad;
                float* d = dst + ((o0 - s0) * out[1] + o1) * out[2];
                if (i0 < 0 || i0 >= in[0] || i1 < 0 || i1 >= in[1]) {
                  std::fill(d, d + out[2], 0.0f);
                  continue;
                }
                const float* src = xp + (i0 * in[1] + i1) * in[2];
                for (std::int64_t o2 = 0; o2 < out[2]; ++o2) {
                  const std::int64_t i2 = o2 * stride + k2 - pad;
                  d[o2] = (i2 >= 0 && i2 < in[2]) ? src[i2] : 0.0f;
                }
              }
            }
          }
        }
      }
    }
  }

  // Adjoint of im2col: scatter-adds col back into dx.
  void col2im(const float* col, std::int64_t s0, std::int64_t s1, float* dx) const {
    const std::int64_t chunk = (s1 - s0) * out_slab();
    const std::int64_t in_voxels = in[0] * in[1] * in[2];
    std::int64_t row = 0;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      float* xp = dx + ci * in_voxels;
      for (int k0 = 0; k0 < k; ++k0) {
        for (int k1 = 0; k1 < k; ++k1) {
          for (int k2 = 0; k2 < k; ++k2, ++row) {
            const float* src = col + row * chunk;
            for (std::int64_t o0 = s0; o0 < s1; ++o0) {
              const std::int64_t i0 = o0 * stride + k0 - pad;
              if (i0 < 0 || i0 >= in[0]) continue;
              for (std::int64_t o1 = 0; o1 < out[1]; ++o1) {
                const std::int64_t i1 = o1 * stride + k1 - pad;
                if (i1 < 0 || i1 >= in[1]) continue;
                const float* s = src + ((o0 - s0) * out[1] + o1) * out[2];
                float* d = xp + (i0 * in[1] + i1) * in[2];
                for (std::int64_t o2 = 0; o2 < out[2]; ++o2) {
                  const std::int64_t i2 = o2 * stride + k2 - pad;
                  if (i2 >= 0 && i2 < in[2]) d[i2] += s[o2];
                }
              }
            }
          }
        }
      }
    }
  }
};

void conv_forward(const ConvGeometry& g, std::int64_t batch, const float* x, const float* w, const float* bias,
                  float* y) {
  const auto& kt = kernels::active();
  const std::int64_t taps = g.taps();
  const std::int64_t in_sample = g.cin * g.in[0] * g.in[1] * g.in[2];
  const std::int64_t out_voxels = g.out[0] * g.out_slab();
  const std::int64_t step = g.slabs_per_chunk();
  std::vector<float> col;
  if (!g.pointwise()) col.resize(static_cast<std::size_t>(taps * step * g.out_slab()));

  for (std::int64_t n = 0; n < batch; ++n) {
    const float* xn = x + n * in_sample;
    float* yn = y + n * g.cout * out_voxels;
    for (std::int64_t s0 = 0; s0 < g.out[0]; s0 += step) {
      const std::int64_t s1 = std::min(g.out[0], s0 + step);
      const std::int64_t chunk = (s1 - s0) * g.out_slab();
      const float* cols = nullptr;
      std::int64_t col_stride = chunk;
      if (g.pointwise()) {
        cols = xn + s0 * g.out_slab();
        col_stride = out_voxels;
      } else {
        g.im2col(xn, s0, s1, col.data());
        cols = col.data();
      }
      for (std::int64_t co = 0; co < g.cout; ++co) {
        float* dst = yn + co * out_voxels + s0 * g.out_slab();
        const float* wr = w + co * taps;
        for (std::int64_t t = 0; t < taps; ++t) {
          kt.axpy(wr[t], cols + t * col_stride, 1, dst, static_cast<std::size_t>(chunk));
        }
      }
    }
    if (bias != nullptr) {
      for (std::int64_t co = 0; co < g.cout; ++co) {
        float* dst = yn + co * out_voxels;
        for (std::int64_t v = 0; v < out_voxels; ++v) dst[v] += bias[co];
      }
    }
  }
}

// dx and dw accumulate; either may be null when not needed.
void conv_backward(const ConvGeometry& g, std::int64_t batch, const float* x, const float* w, const float* dy,
                   float* dx, float* dw) {
  const auto& kt = kernels::active();
  const std::int64_t taps = g.taps();
  const std::int64_t in_sample = g.cin * g.in[0] * g.in[1] * g.in[2];
  const std::int64_t out_voxels = g.out[0] * g.out_slab();
  const std::int64_t step = g.slabs_per_chunk();
  const std::size_t col_size = static_cast<std::size_t>(taps * step * g.out_slab());
  std::vector<float> col(g.pointwise() ? 0 : col_size);
  std::vector<float> dcol(dx != nullptr ? col_size : 0);
  std::vector<double> dw_acc(dw != nullptr ? static_cast<std::size_t>(g.cout * taps) : 0, 0.0);

  for (std::int64_t n = 0; n < batch; ++n) {
    const float* xn = x + n * in_sample;
    const float* dyn = dy + n * g.cout * out_voxels;
    float* dxn = dx != nullptr ? dx + n * in_sample : nullptr;
    for (std::int64_t s0 = 0; s0 < g.out[0]; s0 += step) {
      const std::int64_t s1 = std::min(g.out[0], s0 + step);
      const std::int64_t chunk = (s1 - s0) * g.out_slab();
      if (dw != nullptr) {
        const float* cols = nullptr;
        std::int64_t col_stride = chunk;
        if (g.pointwise()) {
          cols = xn + s0 * g.out_slab();
          col_stride = out_voxels;
        } else {
          g.im2col(xn, s0, s1, col.data());
          cols = col.data();
        }
        for (std::int64_t co = 0; co < g.cout; ++co) {
          const float* dyr = dyn + co * out_voxels + s0 * g.out_slab();
          double* acc = dw_acc.data() + co * taps;
          for (std::int64_t t = 0; t < taps; ++t) {
            acc[t] += kt.dot(cols + t * col_stride, 1, dyr, static_cast<std::size_t>(chunk));
          }
        }
      }
      if (dxn != nullptr) {
        std::fill(dcol.begin(), dcol.begin() + taps * chunk, 0.0f);
        for (std::int64_t co = 0; co < g.cout; ++co) {
          const float* dyr = dyn + co * out_voxels + s0 * g.out_slab();
          const float* wr = w + co * taps;
          for (std::int64_t t = 0; t < taps; ++t) {
            kt.axpy(wr[t], dyr, 1, dcol.data() + t * chunk, static_cast<std::size_t>(chunk));
          }
        }
        if (g.pointwise()) {
          for (std::int64_t t = 0; t < taps; ++t) {
            float* d = dxn + t * out_voxels + s0 * g.out_slab();
            const float* s = dcol.data() + t * chunk;
            for (std::int64_t v = 0; v < chunk; ++v) d[v] += s[v];
          }
        } else {
          g.col2im(dcol.data(), s0, s1, dxn);
        }
      }
    }
  }
  if (dw != nullptr) {
    for (std::size_t i = 0; i < dw_acc.size(); ++i) dw[i] += static_cast<float>(dw_acc[i]);
  }
}

void require_same_shape(const Tensor& x, const Tensor& y, const char* op) {
  if (x.shape() != y.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + x.shape().str() + " vs " + y.shape().str());
  }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvParams& params) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.spatial[0] != ws.spatial[1] || ws.spatial[1] != ws.spatial[2] || ws.spatial[0] % 2 == 0) {
    throw ShapeError("conv3d: kernel must be cubic with odd size, got " + ws.str());
  }
  if (xs.c != ws.c) {
    throw ShapeError("conv3d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                     std::to_string(ws.c));
  }
  if (params.stride < 1 || params.padding < 0) {
    throw ShapeError("conv3d: stride must be >= 1 and padding >= 0");
  }
  if (bias.defined() && bias.numel() != ws.n) {
    throw ShapeError("conv3d: bias has " + std::to_string(bias.numel()) + " elements, expected " +
                     std::to_string(ws.n));
  }

  ConvGeometry g;
  g.cin = ws.c;
  g.cout = ws.n;
  g.k = static_cast<int>(ws.spatial[0]);
  g.stride = params.stride;
  g.pad = params.padding;
  g.in = xs.spatial;
  for (int a = 0; a < 3; ++a) {
    g.out[a] = conv_output_extent(xs.spatial[a], g.k, g.stride, g.pad);
    if (g.out[a] < 1) {
      throw ShapeError("conv3d: output extent < 1 on axis " + std::to_string(a) + " for input " + xs.str());
    }
  }

  std::vector<float> x16;
  std::vector<float> w16;
  if (params.fp16_inputs) {
    x16 = rounded_fp16(x.values());
    w16 = rounded_fp16(w.values());
  }
  const float* xp = params.fp16_inputs ? x16.data() : x.values().data();
  const float* wp = params.fp16_inputs ? w16.data() : w.values().data();

  Tensor y(Shape{xs.n, g.cout, g.out});
  conv_forward(g, xs.n, xp, wp, bias.defined() ? bias.values().data() : nullptr, y.values().data());

  if (Tape* tape = autograd::recording_tape({&x, &w, &bias})) {
    tape->record({x, w, bias}, y,
                 [g, x, w, bias, y, params, x16 = std::move(x16), w16 = std::move(w16)]() mutable {
                   std::span<const float> dy_span = y.grad();
                   std::vector<float> dy16;
                   if (params.fp16_inputs) {
                     dy16 = rounded_fp16(dy_span);
                     dy_span = dy16;
                   }
                   const float* xp = params.fp16_inputs ? x16.data() : x.values().data();
                   const float* wp = params.fp16_inputs ? w16.data() : w.values().data();
                   float* dx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
                   float* dw = w.requires_grad() ? w.grad_buffer().data() : nullptr;
                   if (dx != nullptr || dw != nullptr) {
                     conv_backward(g, x.shape().n, xp, wp, dy_span.data(), dx, dw);
                   }
                   if (bias.defined() && bias.requires_grad()) {
                     auto db = bias.grad_buffer();
                     const std::int64_t vox = y.shape().voxels();
                     for (std::int64_t co = 0; co < g.cout; ++co) {
                       double acc = 0.0;
                       for (std::int64_t n = 0; n < y.shape().n; ++n) {
                         const float* d = dy_span.data() + (n * g.cout + co) * vox;
                         for (std::int64_t v = 0; v < vox; ++v) acc += d[v];
                       }
                       db[static_cast<std::size_t>(co)] += static_cast<float>(acc);
                     }
                   }
                 });
  }
  return y;
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const Shape& s = x.shape();
  if (gamma.numel() != s.c || beta.numel() != s.c) {
    throw ShapeError("instance_norm: affine parameters must have " + std::to_string(s.c) + " elements");
  }
  const std::int64_t vox = s.voxels();
  if (vox < 1) throw ShapeError("instance_norm: empty spatial extent");

  Tensor y(s);
  std::vector<float> xhat(static_cast<std::size_t>(s.numel()));
  std::vector<float> inv_std(static_cast<std::size_t>(s.n * s.c));
  auto g = gamma.values();
  auto b = beta.values();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const float* xp = x.plane(n, c);
      double mean = 0.0;
      for (std::int64_t v = 0; v < vox; ++v) mean += xp[v];
      mean /= static_cast<double>(vox);
      double var = 0.0;
      for (std::int64_t v = 0; v < vox; ++v) {
        const double d = xp[v] - mean;
        var += d * d;
      }
      var /= static_cast<double>(vox);
      const float inv = static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const float m = static_cast<float>(mean);
      inv_std[static_cast<std::size_t>(n * s.c + c)] = inv;
      float* yp = y.plane(n, c);
      float* hp = xhat.data() + (n * s.c + c) * vox;
      const float gc = g[static_cast<std::size_t>(c)];
      const float bc = b[static_cast<std::size_t>(c)];
      for (std::int64_t v = 0; v < vox; ++v) {
        hp[v] = (xp[v] - m) * inv;
        yp[v] = gc * hp[v] + bc;
      }
    }
  }

  if (Tape* tape = autograd::recording_tape({&x, &gamma, &beta})) {
    tape->record({x, gamma, beta}, y,
                 [x, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
                   const Shape& s = x.shape();
                   const std::int64_t vox = s.voxels();
                   auto dy = y.grad();
                   auto g = gamma.values();
                   std::span<float> dx = x.requires_grad() ? x.grad_buffer() : std::span<float>{};
                   std::span<float> dg = gamma.requires_grad() ? gamma.grad_buffer() : std::span<float>{};
                   std::span<float> db = beta.requires_grad() ? beta.grad_buffer() : std::span<float>{};
                   for (std::int64_t n = 0; n < s.n; ++n) {
                     for (std::int64_t c = 0; c < s.c; ++c) {
                       const std::int64_t off = (n * s.c + c) * vox;
                       const float* d = dy.data() + off;
                       const float* h = xhat.data() + off;
                       double sum_dy = 0.0;
                       double sum_dy_h = 0.0;
                       for (std::int64_t v = 0; v < vox; ++v) {
                         sum_dy += d[v];
                         sum_dy_h += static_cast<double>(d[v]) * h[v];
                       }
                       const auto ci = static_cast<std::size_t>(c);
                       if (!dg.empty()) dg[ci] += static_cast<float>(sum_dy_h);
                       if (!db.empty()) db[ci] += static_cast<float>(sum_dy);
                       if (!dx.empty()) {
                         const float gc = g[ci];
                         const float inv = inv_std[static_cast<std::size_t>(n * s.c + c)];
                         const float mean_d = static_cast<float>(sum_dy / static_cast<double>(vox));
                         const float mean_dh = static_cast<float>(sum_dy_h / static_cast<double>(vox));
                         float* out = dx.data() + off;
                         for (std::int64_t v = 0; v < vox; ++v) {
                           out[v] += gc * inv * (d[v] - mean_d - h[v] * mean_dh);
                         }
                       }
                     }
                   }
                 });
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
  if (Tape* tape = autograd::recording_tape({&x})) {
    tape->record({x}, y, [x, y]() mutable {
      auto xv = x.values();
      auto dy = y.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < xv.size(); ++i) {
        if (xv[i] > 0.0f) dx[i] += dy[i];
      }
    });
  }
  return y;
}

Tensor softmax_channels(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.c < 1) throw ShapeError("softmax_channels: no channels");
  const std::int64_t vox = s.voxels();
  Tensor y(s);
  std::vector<float> e(static_cast<std::size_t>(s.c));
  for (std::int64_t n = 0; n < s.n; ++n) {
    const float* xp = x.plane(n, 0);
    float* yp = y.plane(n, 0);
    for (std::int64_t v = 0; v < vox; ++v) {
      float mx = xp[v];
      for (std::int64_t c = 1; c < s.c; ++c) mx = std::max(mx, xp[c * vox + v]);
      double total = 0.0;
      for (std::int64_t c = 0; c < s.c; ++c) {
        e[static_cast<std::size_t>(c)] = std::exp(xp[c * vox + v] - mx);
        total += e[static_cast<std::size_t>(c)];
      }
      for (std::int64_t c = 0; c < s.c; ++c) {
        yp[c * vox + v] = static_cast<float>(e[static_cast<std::size_t>(c)] / total);
      }
    }
  }
  if (Tape* tape = autograd::recording_tape({&x})) {
    tape->record({x}, y, [x, y]() mutable {
      const Shape& s = y.shape();
      const std::int64_t vox = s.voxels();
      auto dy = y.grad();
      auto dx = x.grad_buffer();
      for (std::int64_t n = 0; n < s.n; ++n) {
        const std::int64_t base = n * s.c * vox;
        const float* p = y.values().data() + base;
        const float* d = dy.data() + base;
        float* out = dx.data() + base;
        for (std::int64_t v = 0; v < vox; ++v) {
          double dot = 0.0;
          for (std::int64_t c = 0; c < s.c; ++c) dot += static_cast<double>(p[c * vox + v]) * d[c * vox + v];
          const float fd = static_cast<float>(dot);
          for (std::int64_t c = 0; c < s.c; ++c) out[c * vox + v] += p[c * vox + v] * (d[c * vox + v] - fd);
        }
      }
    });
  }
  return y;
}

namespace {

struct AxisTaps {
  std::vector<std::int64_t> i0, i1;
  std::vector<float> w1;  // weight of i1; i0 gets 1 - w1
};

AxisTaps linear_taps(std::int64_t in, std::int64_t out) {
  AxisTaps taps;
  taps.i0.resize(static_cast<std::size_t>(out));
  taps.i1.resize(static_cast<std::size_t>(out));
  taps.w1.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t t = 0; t < out; ++t) {
    double src = (static_cast<double>(t) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::int64_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::int64_t hi = std::min(lo + 1, in - 1);
    const auto ti = static_cast<std::size_t>(t);
    taps.i0[ti] = lo;
    taps.i1[ti] = hi;
    taps.w1[ti] = hi == lo ? 0.0f : static_cast<float>(src - static_cast<double>(lo));
  }
  return taps;
}

}  // namespace

Tensor trilinear_resize(const Tensor& x, const Extent3& target) {
  const Shape& s = x.shape();
  for (int a = 0; a < 3; ++a) {
    if (target[static_cast<std::size_t>(a)] < 1) throw ShapeError("trilinear_resize: target extent < 1");
    if (s.spatial[static_cast<std::size_t>(a)] < 1) throw ShapeError("trilinear_resize: empty input extent");
  }
  Tensor y(Shape{s.n, s.c, target});
  if (target == s.spatial) {
    std::copy(x.values().begin(), x.values().end(), y.values().begin());
    if (Tape* tape = autograd::recording_tape({&x})) {
      tape->record({x}, y, [x, y]() mutable {
        auto dy = y.grad();
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      });
    }
    return y;
  }

  const AxisTaps a0 = linear_taps(s.spatial[0], target[0]);
  const AxisTaps a1 = linear_taps(s.spatial[1], target[1]);
  const AxisTaps a2 = linear_taps(s.spatial[2], target[2]);
  const std::int64_t in1 = s.spatial[1], in2 = s.spatial[2];
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const float* xp = x.plane(n, c);
      float* yp = y.plane(n, c);
      for (std::int64_t t0 = 0; t0 < target[0]; ++t0) {
        const auto u0 = static_cast<std::size_t>(t0);
        const float w0 = a0.w1[u0];
        const float* r0 = xp + a0.i0[u0] * in1 * in2;
        const float* r1 = xp + a0.i1[u0] * in1 * in2;
        for (std::int64_t t1 = 0; t1 < target[1]; ++t1) {
          const auto u1 = static_cast<std::size_t>(t1);
          const float w1 = a1.w1[u1];
          const float* r00 = r0 + a1.i0[u1] * in2;
          const float* r01 = r0 + a1.i1[u1] * in2;
          const float* r10 = r1 + a1.i0[u1] * in2;
          const float* r11 = r1 + a1.i1[u1] * in2;
          float* out = yp + (t0 * target[1] + t1) * target[2];
          for (std::int64_t t2 = 0; t2 < target[2]; ++t2) {
            const auto u2 = static_cast<std::size_t>(t2);
            const std::int64_t j0 = a2.i0[u2], j1 = a2.i1[u2];
            const float w2 = a2.w1[u2];
            const float c00 = r00[j0] + w2 * (r00[j1] - r00[j0]);
            const float c01 = r01[j0] + w2 * (r01[j1] - r01[j0]);
            const float c10 = r10[j0] + w2 * (r10[j1] - r10[j0]);
            const float c11 = r11[j0] + w2 * (r11[j1] - r11[j0]);
            const float c0 = c00 + w1 * (c01 - c00);
            const float c1 = c10 + w1 * (c11 - c10);
            out[t2] = c0 + w0 * (c1 - c0);
          }
        }
      }
    }
  }

  if (Tape* tape = autograd::recording_tape({&x})) {
    tape->record({x}, y, [x, y, a0, a1, a2]() mutable {
      const Shape& s = x.shape();
      const Extent3& t = y.shape().spatial;
      const std::int64_t in1 = s.spatial[1], in2 = s.spatial[2];
      auto dy = y.grad();
      auto dx = x.grad_buffer();
      for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
        const float* d = dy.data() + nc * y.shape().voxels();
        float* g = dx.data() + nc * s.voxels();
        for (std::int64_t t0 = 0; t0 < t[0]; ++t0) {
          const auto u0 = static_cast<std::size_t>(t0);
          const float w0 = a0.w1[u0];
          for (std::int64_t t1 = 0; t1 < t[1]; ++t1) {
            const auto u1 = static_cast<std::size_t>(t1);
            const float w1 = a1.w1[u1];
            const std::int64_t rows[4] = {
                (a0.i0[u0] * in1 + a1.i0[u1]) * in2, (a0.i0[u0] * in1 + a1.i1[u1]) * in2,
                (a0.i1[u0] * in1 + a1.i0[u1]) * in2, (a0.i1[u0] * in1 + a1.i1[u1]) * in2};
            const float rw[4] = {(1.0f - w0) * (1.0f - w1), (1.0f - w0) * w1, w0 * (1.0f - w1), w0 * w1};
            const float* dr = d + (t0 * t[1] + t1) * t[2];
            for (std::int64_t t2 = 0; t2 < t[2]; ++t2) {
              const auto u2 = static_cast<std::size_t>(t2);
              const float w2 = a2.w1[u2];
              const float gv = dr[t2];
              for (int r = 0; r < 4; ++r) {
                g[rows[r] + a2.i0[u2]] += gv * rw[r] * (1.0f - w2);
                g[rows[r] + a2.i1[u2]] += gv * rw[r] * w2;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor concat_channels(std::span<const Tensor> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& first = xs[0].shape();
  std::int64_t channels = 0;
  for (const Tensor& t : xs) {
    if (t.shape().n != first.n || t.shape().spatial != first.spatial) {
      throw ShapeError("concat_channels: " + t.shape().str() + " does not match " + first.str());
    }
    channels += t.shape().c;
  }
  Tensor y(Shape{first.n, channels, first.spatial});
  const std::int64_t vox = first.voxels();
  for (std::int64_t n = 0; n < first.n; ++n) {
    std::int64_t c0 = 0;
    for (const Tensor& t : xs) {
      std::copy_n(t.plane(n, 0), t.shape().c * vox, y.plane(n, c0));
      c0 += t.shape().c;
    }
  }
  if (Tape* tape = autograd::recording_tape(xs)) {
    std::vector<Tensor> inputs(xs.begin(), xs.end());
    tape->record(inputs, y, [inputs, y]() mutable {
      const std::int64_t vox = y.shape().voxels();
      auto dy = y.grad();
      for (std::int64_t n = 0; n < y.shape().n; ++n) {
        std::int64_t c0 = 0;
        for (Tensor& t : inputs) {
          const std::int64_t len = t.shape().c * vox;
          if (t.requires_grad()) {
            float* dx = t.grad_buffer().data() + n * len;
            const float* src = dy.data() + (n * y.shape().c + c0) * vox;
            for (std::int64_t i = 0; i < len; ++i) dx[i] += src[i];
          }
          c0 += t.shape().c;
        }
      }
    });
  }
  return y;
}

Tensor add(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "add");
  Tensor z(x.shape());
  auto xv = x.values();
  auto yv = y.values();
  auto zv = z.values();
  for (std::size_t i = 0; i < zv.size(); ++i) zv[i] = xv[i] + yv[i];
  if (Tape* tape = autograd::recording_tape({&x, &y})) {
    tape->record({x, y}, z, [x, y, z]() mutable {
      auto dz = z.grad();
      for (const Tensor* t : {&x, &y}) {
        if (!t->requires_grad()) continue;
        auto d = t->grad_buffer();
        for (std::size_t i = 0; i < dz.size(); ++i) d[i] += dz[i];
      }
    });
  }
  return z;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (float v : x.values()) total += v;
  Tensor y = Tensor::scalar(static_cast<float>(total));
  if (Tape* tape = autograd::recording_tape({&x})) {
    tape->record({x}, y, [x, y]() mutable {
      const float g = y.grad()[0];
      for (float& d : x.grad_buffer()) d += g;
    });
  }
  return y;
}

Tensor mul_scalar(const Tensor& x, float factor) {
  Tensor y(x.shape());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = xv[i] * factor;
  if (Tape* tape = autograd::recording_tape({&x})) {
    tape->record({x}, y, [x, y, factor]() mutable {
      auto dy = y.grad();
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    });
  }
  return y;
}

}  // namespace voxseg
