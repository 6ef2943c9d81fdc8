// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "voxseg/error.hpp"

namespace voxseg {

void NoiseParams::validate() const {
  if (!(sigma_low >= 0.0f && sigma_low <= sigma_high)) {
    throw ConfigError("noise sigma range must satisfy 0 <= low <= high");
  }
}

void DeformParams::validate() const {
  if (!(sigma_low > 0.0f && sigma_low <= sigma_high)) {
    throw ConfigError("elastic sigma range must satisfy 0 < low <= high");
  }
  if (!(alpha >= 0.0f) || !std::isfinite(alpha)) throw ConfigError("elastic alpha must be finite and >= 0");
}

DeformField DeformField::zeros(const Dims3& dims) { return constant(dims, 0.0f, 0.0f, 0.0f); }

DeformField DeformField::constant(const Dims3& dims, float dh, float dw, float dd) {
  const auto n = static_cast<std::size_t>(dims.voxels());
  return DeformField{dims, {std::vector<float>(n, dh), std::vector<float>(n, dw), std::vector<float>(n, dd)}};
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Volume add_noise(const Volume& x, float sigma, std::uint64_t seed) {
  if (sigma == 0.0f) return x;
  if (!(sigma > 0.0f)) throw ConfigError("noise sigma must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, sigma);
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v += g(rng);
  return Volume(x.dims(), std::move(out), x.spacing());
}

Volume gaussian_noise(const Volume& x, const NoiseParams& params, std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(derive_seed(seed, 0));
  float sigma = params.sigma_low;
  if (params.sigma_high > params.sigma_low) {
    sigma = std::uniform_real_distribution<float>(params.sigma_low, params.sigma_high)(rng);
  }
  return add_noise(x, sigma, derive_seed(seed, 1));
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

// Convolves `data` along `axis` in place; samples beyond the grid count as 0.
void smooth_axis(std::vector<double>& data, const Dims3& dims, int axis, double sigma) {
  if (!(sigma > 0.0)) return;
  const auto kernel = gaussian_kernel(sigma);
  const auto radius = static_cast<std::int64_t>(kernel.size() / 2);
  const Extent3 ext = dims.extent();
  const std::int64_t len = ext[static_cast<std::size_t>(axis)];
  const std::int64_t stride = axis == 0 ? dims.w * dims.d : (axis == 1 ? dims.d : 1);
  std::vector<double> line(static_cast<std::size_t>(len));

  // Iterate over every line parallel to `axis`.
  const std::int64_t outer = axis == 0 ? 1 : dims.h;
  const std::int64_t mid = axis == 1 ? 1 : dims.w;
  const std::int64_t inner = axis == 2 ? 1 : dims.d;
  for (std::int64_t i = 0; i < outer; ++i) {
    for (std::int64_t j = 0; j < mid; ++j) {
      for (std::int64_t k = 0; k < inner; ++k) {
        const std::int64_t base = (i * dims.w + j) * dims.d + k;
        for (std::int64_t t = 0; t < len; ++t) line[static_cast<std::size_t>(t)] = data[static_cast<std::size_t>(base + t * stride)];
        for (std::int64_t t = 0; t < len; ++t) {
          const std::int64_t lo = std::max<std::int64_t>(0, t - radius);
          const std::int64_t hi = std::min<std::int64_t>(len - 1, t + radius);
          double acc = 0.0;
          for (std::int64_t u = lo; u <= hi; ++u) {
            acc += kernel[static_cast<std::size_t>(u - t + radius)] * line[static_cast<std::size_t>(u)];
          }
          data[static_cast<std::size_t>(base + t * stride)] = acc;
        }
      }
    }
  }
}

}  // namespace

DeformField make_deform_field(const Dims3& dims, const DeformParams& params, std::uint64_t seed) {
  params.validate();
  if (dims.h < 2 || dims.w < 2 || dims.d < 2) {
    throw ValidationError("deformation field needs every extent >= 2");
  }
  DeformField field{dims, {}};
  const auto n = static_cast<std::size_t>(dims.voxels());
  const Extent3 ext = dims.extent();
  for (int comp = 0; comp < 3; ++comp) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(comp)));
    double frac = params.sigma_low;
    if (params.sigma_high > params.sigma_low) {
      frac = std::uniform_real_distribution<double>(params.sigma_low, params.sigma_high)(rng);
    }
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> raw(n);
    for (double& v : raw) v = u(rng);
    for (int axis = 0; axis < 3; ++axis) {
      const double sigma = params.sigma_in_voxels ? frac : frac * static_cast<double>(ext[static_cast<std::size_t>(axis)]);
      smooth_axis(raw, dims, axis, sigma);
    }
    auto& out = field.delta[static_cast<std::size_t>(comp)];
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(params.alpha * raw[i]);
  }
  return field;
}

std::pair<Volume, LabelVolume> elastic_deform(const Volume& x, const LabelVolume& y, const DeformField& field,
                                              OutOfBounds oob) {
  const Dims3& dims = x.dims();
  if (!(y.dims() == dims) || !(field.dims == dims)) {
    throw ShapeError("elastic_deform: intensity, label and field dims must agree");
  }
  const auto n = static_cast<std::size_t>(dims.voxels());
  for (const auto& c : field.delta) {
    if (c.size() != n) throw ShapeError("elastic_deform: field component has the wrong length");
  }
  const Extent3 ext = dims.extent();
  std::vector<float> xv(n, 0.0f);
  std::vector<std::int32_t> yv(n, 0);
  auto xs = x.data();
  auto ys = y.data();

  std::size_t v = 0;
  for (std::int64_t i = 0; i < dims.h; ++i) {
    for (std::int64_t j = 0; j < dims.w; ++j) {
      for (std::int64_t k = 0; k < dims.d; ++k, ++v) {
        const std::array<std::int64_t, 3> pos{i, j, k};
        std::array<std::int64_t, 3> src{};
        bool inside = true;
        for (std::size_t a = 0; a < 3; ++a) {
          const double coord = static_cast<double>(pos[a]) + static_cast<double>(field.delta[a][v]);
          std::int64_t s = static_cast<std::int64_t>(std::floor(coord + 0.5));
          if (s < 0 || s >= ext[a]) {
            if (oob == OutOfBounds::kBackground) {
              inside = false;
              break;
            }
            s = std::clamp<std::int64_t>(s, 0, ext[a] - 1);
          }
          src[a] = s;
        }
        if (!inside) continue;
        const auto si = static_cast<std::size_t>(dims.index(src[0], src[1], src[2]));
        xv[v] = xs[si];
        yv[v] = ys[si];
      }
    }
  }
  return {Volume(dims, std::move(xv), x.spacing()), LabelVolume(dims, std::move(yv), y.num_classes(), y.spacing())};
}

std::pair<Volume, LabelVolume> augment_pair(const Volume& x, const LabelVolume& y, const AugmentParams& params,
                                            std::uint64_t seed) {
  std::pair<Volume, LabelVolume> out{x, y};
  if (params.elastic) {
    const DeformField field = make_deform_field(x.dims(), params.deform, derive_seed(seed, 100));
    out = elastic_deform(x, y, field, params.oob);
  }
  if (params.noise) out.first = gaussian_noise(out.first, params.noise_params, derive_seed(seed, 200));
  return out;
}

}  // namespace voxseg
