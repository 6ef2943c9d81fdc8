// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "voxseg/tensor.hpp"

namespace voxseg {

/// Voxel counts (H, W, D). Data is row-major with D fastest.
struct Dims3 {
  std::int64_t h = 0, w = 0, d = 0;

  std::int64_t voxels() const { return h * w * d; }
  std::int64_t index(std::int64_t i, std::int64_t j, std::int64_t k) const { return (i * w + j) * d + k; }
  Extent3 extent() const { return {h, w, d}; }
  bool operator==(const Dims3&) const = default;
};

using Spacing = std::array<float, 3>;

/// Intensity volume.
class Volume {
 public:
  Volume() = default;
  Volume(Dims3 dims, std::vector<float> data, Spacing spacing = {1.0f, 1.0f, 1.0f});

  const Dims3& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::span<const float> data() const { return data_; }
  float at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>(dims_.index(i, j, k))];
  }

 private:
  Dims3 dims_;
  Spacing spacing_{1.0f, 1.0f, 1.0f};
  std::vector<float> data_;
};

/// Label volume with labels in [0, num_classes), 0 = background.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Dims3 dims, std::vector<std::int32_t> data, int num_classes,
              Spacing spacing = {1.0f, 1.0f, 1.0f});

  const Dims3& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  int num_classes() const { return num_classes_; }
  std::span<const std::int32_t> data() const { return data_; }
  std::int32_t at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[static_cast<std::size_t>(dims_.index(i, j, k))];
  }
  /// 1 + the largest label present (at least 2).
  static int infer_classes(std::span<const std::int32_t> data);

 private:
  Dims3 dims_;
  Spacing spacing_{1.0f, 1.0f, 1.0f};
  int num_classes_ = 2;
  std::vector<std::int32_t> data_;
};

using AnyVolume = std::variant<Volume, LabelVolume>;

/// Reads a VVOL file (float32 -> Volume, uint16 -> LabelVolume) or a
/// single-file NIfTI-1 image (uint8 / int16 / float32, always a Volume).
AnyVolume load_volume(const std::filesystem::path& path);

/// Intensities from any supported file; label files are converted.
Volume load_intensity(const std::filesystem::path& path);

/// Labels from a VVOL label file or an integer-valued intensity file.
/// `num_classes` <= 0 infers 1 + max label.
LabelVolume load_labels(const std::filesystem::path& path, int num_classes = 0);

/// Writes VVOL. Labels above 65535 cannot be stored and are rejected.
void save_volume(const Volume& v, const std::filesystem::path& path);
void save_volume(const LabelVolume& v, const std::filesystem::path& path);

/// Zero mean, unit standard deviation over all voxels.
Volume zscore_normalize(const Volume& v);

/// (1, L, H, W, D) tensor with a single 1 per voxel at the voxel's label.
Tensor one_hot(const LabelVolume& y);

/// (1, 1, H, W, D) tensor view of the intensities.
Tensor to_tensor(const Volume& v);

}  // namespace voxseg
