// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Data-parallel inner loops. Every kernel has a scalar reference in
// kernels/scalar.cpp and optionally a SIMD variant; the variant in use is
// picked once at runtime from CPU features and can be forced for testing.
//
// All variants of a kernel produce bitwise-identical results. Reductions
// (`dot`) therefore follow one canonical order on every ISA: eight
// interleaved partial sums over full blocks of eight, folded as
// (l0+l4, l1+l5, l2+l6, l3+l7) -> (s0+s2, s1+s3) -> t0+t1, after which the
// tail elements are added sequentially.
namespace voxseg::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;

  /// y[i] += a * x[i * x_stride], i in [0, n).
  void (*axpy)(float a, const float* x, std::ptrdiff_t x_stride, float* y, std::size_t n);

  /// y[i * y_stride] += a * x[i], i in [0, n).
  void (*scatter_axpy)(float a, const float* x, float* y, std::ptrdiff_t y_stride, std::size_t n);

  /// Sum of x[i * x_stride] * y[i] in the canonical order.
  float (*dot)(const float* x, std::ptrdiff_t x_stride, const float* y, std::size_t n);

  void (*fp16_encode)(const float* src, std::uint16_t* dst, std::size_t n);
  void (*fp16_decode)(const std::uint16_t* src, float* dst, std::size_t n);
  /// dst[i] = decode(encode(src[i])). src and dst may alias.
  void (*fp16_round)(const float* src, float* dst, std::size_t n);

  /// d = decode(a) * decode(b) + c for row-major 4x4 tiles. Each entry is
  /// ((p0 + p1) + p2) + p3 accumulated in FP32, then c is added.
  void (*fma_tile4x4)(const std::uint16_t* a, const std::uint16_t* b, const float* c, float* d);
};

/// Table in use. Chosen on first call: the best variant the CPU supports,
/// unless the environment variable VOXSEG_ISA=scalar forces the reference.
const KernelTable& active();

const KernelTable& scalar_table();

/// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* table_for(Isa isa);

/// Switch the active table; returns false if `isa` is unavailable.
bool set_active(Isa isa);

/// Restores the previously active table on destruction.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;
  bool ok() const { return ok_; }

 private:
  const KernelTable* previous_;
  bool ok_;
};

namespace detail {
const KernelTable* avx2_table();
}  // namespace detail

}  // namespace voxseg::kernels
