// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "voxseg/tensor.hpp"

// Differentiable layer operations. Each one records its adjoint on the active
// tape when any input requires a gradient.
namespace voxseg {

struct ConvParams {
  int stride = 1;
  int padding = 0;
  /// Round x and w (and the incoming gradient on the way back) to FP16
  /// before the FP32-accumulated convolution.
  bool fp16_inputs = false;
};

/// Output extent of a convolution along one axis.
std::int64_t conv_output_extent(std::int64_t extent, int kernel, int stride, int padding);

/// 3D cross-correlation with zero padding. `w` is (Cout, Cin, k, k, k) stored
/// as Shape{Cout, Cin, {k, k, k}}; `bias` is empty or has Cout elements.
///
/// Each output element accumulates its taps in (ci, k0, k1, k2) order,
/// skipping taps that fall in the padding, then adds the bias.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, const ConvParams& params);

/// Per-(sample, channel) normalization over the spatial voxels, followed by
/// a per-channel affine transform. gamma/beta hold one value per channel.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

Tensor relu(const Tensor& x);

/// Softmax over the channel axis at every voxel.
Tensor softmax_channels(const Tensor& x);

/// Trilinear resampling with the align-corners-false convention.
Tensor trilinear_resize(const Tensor& x, const Extent3& target);

Tensor concat_channels(std::span<const Tensor> xs);

Tensor add(const Tensor& x, const Tensor& y);

/// Sum of every element, as a scalar tensor.
Tensor sum(const Tensor& x);

Tensor mul_scalar(const Tensor& x, float factor);

}  // namespace voxseg
