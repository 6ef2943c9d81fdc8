// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

#include "voxseg/tensor.hpp"

namespace voxseg {

enum class LossKind { kCrossEntropy, kDice, kCombined };

LossKind parse_loss_kind(std::string_view text);
std::string_view loss_kind_name(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::kCrossEntropy;
  float dice_epsilon = 1e-4f;
  float log_floor = 1e-12f;
};

/// -(1/|voxels|) * sum_v sum_l y_l(v) * log(max(p_l(v), log_floor)), averaged
/// over the batch. `p` holds probabilities, `y` the one-hot target.
Tensor cross_entropy(const Tensor& p, const Tensor& y, float log_floor = 1e-12f);

/// Soft Dice: 1 - mean_l (eps + 2 sum y*p) / (eps + sum (y + p)), computed per
/// volume and averaged over the batch.
Tensor dice_loss(const Tensor& p, const Tensor& y, float eps = 1e-4f);

/// cross_entropy + dice_loss, unweighted.
Tensor combined_loss(const Tensor& p, const Tensor& y, const LossConfig& config);

Tensor compute_loss(const Tensor& p, const Tensor& y, const LossConfig& config);

}  // namespace voxseg
