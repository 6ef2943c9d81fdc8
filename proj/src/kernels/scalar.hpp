// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace voxseg::kernels::scalar {

void axpy(float a, const float* x, std::ptrdiff_t x_stride, float* y, std::size_t n);
void scatter_axpy(float a, const float* x, float* y, std::ptrdiff_t y_stride, std::size_t n);
float fold_lanes(const float lanes[8]);
float dot(const float* x, std::ptrdiff_t x_stride, const float* y, std::size_t n);
void fp16_encode(const float* src, std::uint16_t* dst, std::size_t n);
void fp16_decode(const std::uint16_t* src, float* dst, std::size_t n);
void fp16_round(const float* src, float* dst, std::size_t n);
void fma_tile4x4(const std::uint16_t* a, const std::uint16_t* b, const float* c, float* d);

}  // namespace voxseg::kernels::scalar
