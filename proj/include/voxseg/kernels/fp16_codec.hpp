// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>

// Bit-level IEEE 754 binary16 <-> binary32 conversion, round-to-nearest-even.
// NaNs are quieted with the upper payload bits kept, which is what the x86
// F16C instructions do, so scalar and SIMD conversions agree bit for bit.
namespace voxseg::kernels {

inline std::uint16_t encode_fp16_scalar(float value) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const auto sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  const std::uint32_t mag = bits & 0x7FFFFFFFu;

  if (mag > 0x7F800000u) {  // NaN
    return static_cast<std::uint16_t>(sign | 0x7E00u | ((mag >> 13) & 0x03FFu));
  }
  if (mag >= 0x477FF000u) {  // >= 65520 rounds past 65504
    return static_cast<std::uint16_t>(sign | 0x7C00u);
  }
  if (mag >= 0x38800000u) {  // normal range, 2^-14 and up
    std::uint32_t h = (mag >> 13) - (112u << 10);
    const std::uint32_t rem = mag & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;
    return static_cast<std::uint16_t>(sign | h);
  }
  if (mag <= 0x33000000u) {  // <= 2^-25 ties to zero
    return sign;
  }
  // Subnormal: count units of 2^-24.
  const std::uint32_t exponent = mag >> 23;
  const std::uint32_t mant = (mag & 0x007FFFFFu) | 0x00800000u;
  const std::uint32_t shift = 126u - exponent;
  std::uint32_t h = mant >> shift;
  const std::uint32_t rem = mant & ((1u << shift) - 1u);
  const std::uint32_t half = 1u << (shift - 1u);
  if (rem > half || (rem == half && (h & 1u))) ++h;
  return static_cast<std::uint16_t>(sign | h);
}

inline float decode_fp16_scalar(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exponent = (h >> 10) & 0x1Fu;
  const std::uint32_t mant = h & 0x03FFu;
  std::uint32_t bits;
  if (exponent == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      // Renormalize the subnormal.
      std::uint32_t e = 113;
      std::uint32_t m = mant;
      while ((m & 0x0400u) == 0) {
        m <<= 1;
        --e;
      }
      bits = sign | (e << 23) | ((m & 0x03FFu) << 13);
    }
  } else if (exponent == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
    if (mant != 0) bits |= 0x00400000u;  // quiet
  } else {
    bits = sign | ((exponent + 112u) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace voxseg::kernels
