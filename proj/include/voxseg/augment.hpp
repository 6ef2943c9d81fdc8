// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "voxseg/volio.hpp"

namespace voxseg {

struct NoiseParams {
  float sigma_low = 0.0f;
  float sigma_high = 0.1f;
  void validate() const;
};

struct DeformParams {
  /// Smoothing width range. With `sigma_in_voxels` false the drawn value is
  /// a fraction of each axis extent.
  float sigma_low = 0.04f;
  float sigma_high = 0.06f;
  bool sigma_in_voxels = false;
  /// Displacement scale in voxels.
  float alpha = 8.0f;
  void validate() const;
};

enum class OutOfBounds { kBackground, kClamp };

/// Per-voxel displacement in voxels, one grid per axis (H, W, D).
struct DeformField {
  Dims3 dims;
  std::array<std::vector<float>, 3> delta;

  static DeformField zeros(const Dims3& dims);
  static DeformField constant(const Dims3& dims, float dh, float dw, float dd);
  bool operator==(const DeformField&) const = default;
};

/// x + G with G ~ N(0, sigma^2) i.i.d., sigma drawn once from the range.
Volume gaussian_noise(const Volume& x, const NoiseParams& params, std::uint64_t seed);

/// Fixed-sigma variant; sigma == 0 returns an exact copy.
Volume add_noise(const Volume& x, float sigma, std::uint64_t seed);

/// Uniform(-1, 1) components smoothed by a unit-sum separable Gaussian
/// (truncated at 3 sigma, zero outside the grid) and scaled by alpha.
DeformField make_deform_field(const Dims3& dims, const DeformParams& params, std::uint64_t seed);

/// Nearest-neighbour warp: target v reads source round(v + delta(v)), with
/// halves rounded up. Both volumes move together.
std::pair<Volume, LabelVolume> elastic_deform(const Volume& x, const LabelVolume& y, const DeformField& field,
                                              OutOfBounds oob = OutOfBounds::kBackground);

struct AugmentParams {
  bool elastic = true;
  bool noise = true;
  DeformParams deform;
  NoiseParams noise_params;
  OutOfBounds oob = OutOfBounds::kBackground;
};

/// Elastic warp, then additive noise on the intensities, each stage seeded
/// from its own stream of `seed`.
std::pair<Volume, LabelVolume> augment_pair(const Volume& x, const LabelVolume& y, const AugmentParams& params,
                                            std::uint64_t seed);

/// Independent 64-bit seed for sub-stream `stream` of `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace voxseg
