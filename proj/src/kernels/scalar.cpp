// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernels/scalar.hpp"

#include "voxseg/kernels/fp16_codec.hpp"

namespace voxseg::kernels::scalar {

void axpy(float a, const float* x, std::ptrdiff_t x_stride, float* y, std::size_t n) {
  if (x_stride == 1) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
    return;
  }
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[static_cast<std::ptrdiff_t>(i) * x_stride];
}

void scatter_axpy(float a, const float* x, float* y, std::ptrdiff_t y_stride, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[static_cast<std::ptrdiff_t>(i) * y_stride] += a * x[i];
}

float fold_lanes(const float lanes[8]) {
  const float s0 = lanes[0] + lanes[4];
  const float s1 = lanes[1] + lanes[5];
  const float s2 = lanes[2] + lanes[6];
  const float s3 = lanes[3] + lanes[7];
  const float t0 = s0 + s2;
  const float t1 = s1 + s3;
  return t0 + t1;
}

float dot(const float* x, std::ptrdiff_t x_stride, const float* y, std::size_t n) {
  float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) {
      lanes[j] += x[static_cast<std::ptrdiff_t>(i + j) * x_stride] * y[i + j];
    }
  }
  float total = fold_lanes(lanes);
  for (; i < n; ++i) total += x[static_cast<std::ptrdiff_t>(i) * x_stride] * y[i];
  return total;
}

void fp16_encode(const float* src, std::uint16_t* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = encode_fp16_scalar(src[i]);
}

void fp16_decode(const std::uint16_t* src, float* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = decode_fp16_scalar(src[i]);
}

void fp16_round(const float* src, float* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] = decode_fp16_scalar(encode_fp16_scalar(src[i]));
}

void fma_tile4x4(const std::uint16_t* a, const std::uint16_t* b, const float* c, float* d) {
  float af[16];
  float bf[16];
  fp16_decode(a, af, 16);
  fp16_decode(b, bf, 16);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      float acc = af[i * 4 + 0] * bf[0 * 4 + j];
      acc += af[i * 4 + 1] * bf[1 * 4 + j];
      acc += af[i * 4 + 2] * bf[2 * 4 + j];
      acc += af[i * 4 + 3] * bf[3 * 4 + j];
      d[i * 4 + j] = acc + c[i * 4 + j];
    }
  }
}

}  // namespace voxseg::kernels::scalar
