// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations shared by the unit tests and the
// acceptance runner. None of these call into the library code they check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "voxseg/ops.hpp"
#include "voxseg/tensor.hpp"
#include "voxseg/volio.hpp"

namespace voxseg::oracle {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(static_cast<std::size_t>(shape.numel()));
  for (float& x : v) x = u(rng);
  return Tensor(shape, std::move(v));
}

/// Direct convolution: taps in (ci, k0, k1, k2) order, padded taps skipped,
/// FP32 accumulation, bias added last.
inline Tensor naive_conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const std::int64_t k = ws.spatial[0];
  Shape os{xs.n, ws.n, {}};
  for (int a = 0; a < 3; ++a) os.spatial[a] = (xs.spatial[a] + 2 * padding - k) / stride + 1;
  Tensor out(os);
  auto xv = x.values();
  auto wv = w.values();
  auto ov = out.values();
  const auto [H, W, D] = xs.spatial;
  const auto [OH, OW, OD] = os.spatial;
  std::size_t o = 0;
  for (std::int64_t n = 0; n < os.n; ++n)
    for (std::int64_t co = 0; co < os.c; ++co)
      for (std::int64_t i = 0; i < OH; ++i)
        for (std::int64_t j = 0; j < OW; ++j)
          for (std::int64_t l = 0; l < OD; ++l) {
            float acc = 0.0f;
            for (std::int64_t ci = 0; ci < xs.c; ++ci)
              for (std::int64_t a = 0; a < k; ++a)
                for (std::int64_t b = 0; b < k; ++b)
                  for (std::int64_t c = 0; c < k; ++c) {
                    const std::int64_t ii = i * stride - padding + a;
                    const std::int64_t jj = j * stride - padding + b;
                    const std::int64_t ll = l * stride - padding + c;
                    if (ii < 0 || jj < 0 || ll < 0 || ii >= H || jj >= W || ll >= D) continue;
                    const float xval = xv[static_cast<std::size_t>((((n * xs.c + ci) * H + ii) * W + jj) * D + ll)];
                    const float wval = wv[static_cast<std::size_t>((((co * xs.c + ci) * k + a) * k + b) * k + c)];
                    const float prod = xval * wval;
                    acc = acc + prod;
                  }
            if (bias.defined() && bias.numel() > 0) acc = acc + bias.values()[static_cast<std::size_t>(co)];
            ov[o++] = acc;
          }
  return out;
}

struct GradCheckResult {
  double max_rel = 0.0;
  std::string worst;
  std::size_t checked = 0;
  /// ||analytic - numeric|| / ||numeric|| over the compared probes.
  double vector_rel = 0.0;
};

/// Compares reverse-mode gradients of sum_i w_i * f()_i (fixed random w,
/// summed in double) with central differences for each entry of `inputs`.
/// The relative error of an entry is |a - n| / max(|a|, |n|, floor) where
/// floor = `floor_fraction` * the largest numeric magnitude over all inputs,
/// so entries that are zero up to rounding noise (a bias feeding a
/// normalization, say) do not dominate. At most `max_entries` entries per
/// input are probed, evenly spaced.
///
/// `vector_rel` is the error of the probed gradient as a whole. Deep ReLU
/// networks in single precision have entries whose finite difference is
/// spoiled by a kink or rounding noise, so end-to-end checks use it.
inline GradCheckResult check_gradients(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                       std::uint64_t seed, double h = 1e-2, double floor_fraction = 1e-2,
                                       std::size_t max_entries = 400) {
  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.drop_grad();
  }
  std::vector<double> weights;
  auto weighted = [&](const Tensor& out) {
    if (weights.empty()) {
      // Mixed so the weights never replay a stream the caller drew inputs from.
      std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ull);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      weights.resize(static_cast<std::size_t>(out.numel()));
      for (double& w : weights) w = u(rng);
    }
    double s = 0.0;
    auto v = out.values();
    for (std::size_t i = 0; i < v.size(); ++i) s += weights[i] * v[i];
    return s;
  };

  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f();
    const double value = weighted(out);
    Tensor root = Tensor::scalar(static_cast<float>(value));
    tape.record({out}, root, [out, root, &weights]() {
      const float g = root.grad()[0];
      auto og = out.grad_buffer();
      for (std::size_t i = 0; i < og.size(); ++i) og[i] += static_cast<float>(weights[i] * g);
    });
    tape.backward(root);
  }

  struct Probe {
    std::size_t input, index;
    double analytic, numeric;
  };
  std::vector<Probe> probes;
  double max_num = 0.0;
  NoGradScope no_grad;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Tensor& x = inputs[t];
    auto xv = x.values();
    const std::vector<float> analytic(x.grad_buffer().begin(), x.grad_buffer().end());
    const std::size_t n = xv.size();
    const std::size_t step = std::max<std::size_t>(1, n / max_entries);
    for (std::size_t i = 0; i < n; i += step) {
      const float v = xv[i];
      const float plus = static_cast<float>(v + h);
      const float minus = static_cast<float>(v - h);
      xv[i] = plus;
      const double fp = weighted(f());
      xv[i] = minus;
      const double fm = weighted(f());
      xv[i] = v;
      const double d = (fp - fm) / (static_cast<double>(plus) - static_cast<double>(minus));
      probes.push_back({t, i, analytic[i], d});
      max_num = std::max(max_num, std::abs(d));
    }
  }

  GradCheckResult result;
  double diff2 = 0.0;
  double num2 = 0.0;
  const double floor = std::max(floor_fraction * max_num, 1e-12);
  for (const Probe& p : probes) {
    diff2 += (p.analytic - p.numeric) * (p.analytic - p.numeric);
    num2 += p.numeric * p.numeric;
    const double rel = std::abs(p.analytic - p.numeric) / std::max({std::abs(p.analytic), std::abs(p.numeric), floor});
    ++result.checked;
    if (rel > result.max_rel) {
      result.max_rel = rel;
      result.worst = "input " + std::to_string(p.input) + " entry " + std::to_string(p.index) + ": analytic " +
                     std::to_string(p.analytic) + " numeric " + std::to_string(p.numeric);
    }
  }
  result.vector_rel = num2 > 0.0 ? std::sqrt(diff2 / num2) : std::sqrt(diff2);
  return result;
}

/// Overlap in percent of label `c`; 100 when absent from both.
inline double brute_dsc(const LabelVolume& g, const LabelVolume& p, int c) {
  std::int64_t ng = 0, np = 0, both = 0;
  for (std::size_t i = 0; i < g.data().size(); ++i) {
    const bool a = g.data()[i] == c;
    const bool b = p.data()[i] == c;
    ng += a;
    np += b;
    both += a && b;
  }
  if (ng + np == 0) return 100.0;
  return 200.0 * static_cast<double>(both) / static_cast<double>(ng + np);
}

/// All-pairs symmetric Hausdorff distance of label `c` in voxel units.
inline double brute_hausdorff(const LabelVolume& g, const LabelVolume& p, int c) {
  auto points = [c](const LabelVolume& v) {
    std::vector<std::array<std::int64_t, 3>> pts;
    const Dims3& d = v.dims();
    for (std::int64_t i = 0; i < d.h; ++i)
      for (std::int64_t j = 0; j < d.w; ++j)
        for (std::int64_t k = 0; k < d.d; ++k)
          if (v.at(i, j, k) == c) pts.push_back({i, j, k});
    return pts;
  };
  const auto a = points(g);
  const auto b = points(p);
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  auto directed = [](const auto& from, const auto& to) {
    std::int64_t worst = 0;
    for (const auto& x : from) {
      std::int64_t best = std::numeric_limits<std::int64_t>::max();
      for (const auto& y : to) {
        const std::int64_t dx = x[0] - y[0], dy = x[1] - y[1], dz = x[2] - y[2];
        best = std::min(best, dx * dx + dy * dy + dz * dz);
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(static_cast<double>(std::max(directed(a, b), directed(b, a))));
}

inline LabelVolume random_labels(const Dims3& dims, int classes, std::mt19937_64& rng, double fill = 1.0) {
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::bernoulli_distribution keep(fill);
  std::vector<std::int32_t> data(static_cast<std::size_t>(dims.voxels()));
  for (auto& v : data) v = keep(rng) ? label(rng) : 0;
  return LabelVolume(dims, std::move(data), classes);
}

}  // namespace voxseg::oracle
