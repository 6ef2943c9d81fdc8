// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

// AVX2 + F16C variants. Multiplies and adds stay separate instructions so
// every lane rounds exactly like the scalar reference.

#include <immintrin.h>

#include <limits>

#include "kernels/scalar.hpp"
#include "voxseg/kernels/kernels.hpp"

namespace voxseg::kernels {
namespace {

// Even elements of x[0..15] in order.
inline __m256 load_even(const float* x) {
  const __m256 lo = _mm256_loadu_ps(x);
  const __m256 hi = _mm256_loadu_ps(x + 8);
  const __m256 mixed = _mm256_shuffle_ps(lo, hi, _MM_SHUFFLE(2, 0, 2, 0));
  return _mm256_castpd_ps(
      _mm256_permute4x64_pd(_mm256_castps_pd(mixed), _MM_SHUFFLE(3, 1, 2, 0)));
}

void axpy_avx2(float a, const float* x, std::ptrdiff_t x_stride, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  if (x_stride == 1) {
    for (; i + 8 <= n; i += 8) {
      const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
      _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
    }
  } else if (x_stride == 2) {
    // load_even reads one element past the last one it uses.
    for (; i + 8 < n; i += 8) {
      const __m256 prod = _mm256_mul_ps(va, load_even(x + 2 * i));
      _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
    }
  }
  for (; i < n; ++i) y[i] += a * x[static_cast<std::ptrdiff_t>(i) * x_stride];
}

void scatter_axpy_avx2(float a, const float* x, float* y, std::ptrdiff_t y_stride, std::size_t n) {
  if (y_stride == 1) {
    axpy_avx2(a, x, 1, y, n);
    return;
  }
  scalar::scatter_axpy(a, x, y, y_stride, n);
}

float fold(__m256 acc) {
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, acc);
  return scalar::fold_lanes(lanes);
}

float dot_avx2(const float* x, std::ptrdiff_t x_stride, const float* y, std::size_t n) {
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(n) * (x_stride < 0 ? -x_stride : x_stride);
  if (x_stride != 1 && span > std::numeric_limits<int>::max() / 2) {
    return scalar::dot(x, x_stride, y, n);
  }
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  if (x_stride == 1) {
    for (; i + 8 <= n; i += 8) {
      acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
  } else {
    const int s = static_cast<int>(x_stride);
    const __m256i offsets = _mm256_setr_epi32(0, s, 2 * s, 3 * s, 4 * s, 5 * s, 6 * s, 7 * s);
    for (; i + 8 <= n; i += 8) {
      const __m256 xv = _mm256_i32gather_ps(x + static_cast<std::ptrdiff_t>(i) * x_stride, offsets, 4);
      acc = _mm256_add_ps(acc, _mm256_mul_ps(xv, _mm256_loadu_ps(y + i)));
    }
  }
  float total = fold(acc);
  for (; i < n; ++i) total += x[static_cast<std::ptrdiff_t>(i) * x_stride] * y[i];
  return total;
}

void fp16_encode_avx2(const float* src, std::uint16_t* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i h = _mm256_cvtps_ph(_mm256_loadu_ps(src + i), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(dst + i), h);
  }
  scalar::fp16_encode(src + i, dst + i, n - i);
}

void fp16_decode_avx2(const std::uint16_t* src, float* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i h = _mm_loadu_si128(reinterpret_cast<const __m128i*>(src + i));
    _mm256_storeu_ps(dst + i, _mm256_cvtph_ps(h));
  }
  scalar::fp16_decode(src + i, dst + i, n - i);
}

void fp16_round_avx2(const float* src, float* dst, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m128i h = _mm256_cvtps_ph(_mm256_loadu_ps(src + i), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    _mm256_storeu_ps(dst + i, _mm256_cvtph_ps(h));
  }
  scalar::fp16_round(src + i, dst + i, n - i);
}

void fma_tile4x4_avx2(const std::uint16_t* a, const std::uint16_t* b, const float* c, float* d) {
  alignas(32) float af[16];
  fp16_decode_avx2(a, af, 16);
  const __m256 b01 = _mm256_cvtph_ps(_mm_loadu_si128(reinterpret_cast<const __m128i*>(b)));
  const __m256 b23 = _mm256_cvtph_ps(_mm_loadu_si128(reinterpret_cast<const __m128i*>(b + 8)));
  // Row k of B duplicated into both 128-bit halves.
  const __m256 brow[4] = {
      _mm256_permute2f128_ps(b01, b01, 0x00),
      _mm256_permute2f128_ps(b01, b01, 0x11),
      _mm256_permute2f128_ps(b23, b23, 0x00),
      _mm256_permute2f128_ps(b23, b23, 0x11),
  };
  for (int i = 0; i < 4; i += 2) {
    auto a_pair = [&](int k) {
      return _mm256_setr_ps(af[i * 4 + k], af[i * 4 + k], af[i * 4 + k], af[i * 4 + k],
                            af[(i + 1) * 4 + k], af[(i + 1) * 4 + k], af[(i + 1) * 4 + k],
                            af[(i + 1) * 4 + k]);
    };
    __m256 acc = _mm256_mul_ps(a_pair(0), brow[0]);
    acc = _mm256_add_ps(acc, _mm256_mul_ps(a_pair(1), brow[1]));
    acc = _mm256_add_ps(acc, _mm256_mul_ps(a_pair(2), brow[2]));
    acc = _mm256_add_ps(acc, _mm256_mul_ps(a_pair(3), brow[3]));
    acc = _mm256_add_ps(acc, _mm256_loadu_ps(c + i * 4));
    _mm256_storeu_ps(d + i * 4, acc);
  }
}

const KernelTable kAvx2Table{
    Isa::kAvx2,       axpy_avx2,        scatter_axpy_avx2, dot_avx2,
    fp16_encode_avx2, fp16_decode_avx2, fp16_round_avx2,   fma_tile4x4_avx2,
};

}  // namespace

namespace detail {
const KernelTable* avx2_table() {
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("f16c")) return &kAvx2Table;
  return nullptr;
}
}  // namespace detail

}  // namespace voxseg::kernels
