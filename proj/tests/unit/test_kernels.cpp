// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <random>
#include <vector>

#include "voxseg/kernels/kernels.hpp"

namespace {

using voxseg::kernels::Isa;
using voxseg::kernels::KernelTable;

const KernelTable* simd_or_skip() { return voxseg::kernels::table_for(Isa::kAvx2); }

std::vector<float> random_floats(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  }
  return true;
}

TEST(Kernels, ScalarTableIsAlwaysAvailable) {
  const KernelTable* t = voxseg::kernels::table_for(Isa::kScalar);
  ASSERT_NE(t, nullptr);
  EXPECT_EQ(t, &voxseg::kernels::scalar_table());
}

TEST(Kernels, ScopedIsaRestoresPreviousTable) {
  const KernelTable* before = &voxseg::kernels::active();
  {
    voxseg::kernels::ScopedIsa s(Isa::kScalar);
    EXPECT_TRUE(s.ok());
    EXPECT_EQ(voxseg::kernels::active().isa, Isa::kScalar);
  }
  EXPECT_EQ(&voxseg::kernels::active(), before);
}

TEST(Kernels, DotFollowsCanonicalOrder) {
  const KernelTable& s = voxseg::kernels::scalar_table();
  std::mt19937 rng(3);
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 16u, 23u}) {
    auto x = random_floats(n, rng);
    auto y = random_floats(n, rng);
    float lanes[8] = {};
    const std::size_t full = n / 8 * 8;
    for (std::size_t i = 0; i < full; ++i) lanes[i % 8] = lanes[i % 8] + x[i] * y[i];
    const float s0 = lanes[0] + lanes[4], s1 = lanes[1] + lanes[5];
    const float s2 = lanes[2] + lanes[6], s3 = lanes[3] + lanes[7];
    float total = (s0 + s2) + (s1 + s3);
    for (std::size_t i = full; i < n; ++i) total = total + x[i] * y[i];
    EXPECT_EQ(std::bit_cast<std::uint32_t>(s.dot(x.data(), 1, y.data(), n)), std::bit_cast<std::uint32_t>(total))
        << "n=" << n;
  }
}

TEST(Kernels, SimdMatchesScalarOnAxpyDotScatter) {
  const KernelTable* v = simd_or_skip();
  if (!v) GTEST_SKIP() << "AVX2 variant unavailable on this machine";
  const KernelTable& s = voxseg::kernels::scalar_table();
  std::mt19937 rng(11);
  for (std::size_t n = 0; n < 70; ++n) {
    for (std::ptrdiff_t stride : {1, 3}) {
      auto x = random_floats(n * static_cast<std::size_t>(stride) + 1, rng);
      auto y = random_floats(n * static_cast<std::size_t>(stride) + 1, rng);
      const float a = 0.37f;

      auto ys = y, yv = y;
      s.axpy(a, x.data(), stride, ys.data(), n);
      v->axpy(a, x.data(), stride, yv.data(), n);
      EXPECT_TRUE(same_bits(ys, yv)) << "axpy n=" << n;

      ys = y, yv = y;
      s.scatter_axpy(a, x.data(), ys.data(), stride, n);
      v->scatter_axpy(a, x.data(), yv.data(), stride, n);
      EXPECT_TRUE(same_bits(ys, yv)) << "scatter_axpy n=" << n;

      const float ds = s.dot(x.data(), stride, y.data(), n);
      const float dv = v->dot(x.data(), stride, y.data(), n);
      EXPECT_EQ(std::bit_cast<std::uint32_t>(ds), std::bit_cast<std::uint32_t>(dv)) << "dot n=" << n;
    }
  }
}

TEST(Kernels, SimdMatchesScalarOnFp16Decode) {
  const KernelTable* v = simd_or_skip();
  if (!v) GTEST_SKIP() << "AVX2 variant unavailable on this machine";
  const KernelTable& s = voxseg::kernels::scalar_table();
  std::vector<std::uint16_t> all(65536);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint16_t>(i);
  std::vector<float> a(all.size()), b(all.size());
  s.fp16_decode(all.data(), a.data(), all.size());
  v->fp16_decode(all.data(), b.data(), all.size());
  EXPECT_TRUE(same_bits(a, b));
}

TEST(Kernels, SimdMatchesScalarOnFp16EncodeSample) {
  const KernelTable* v = simd_or_skip();
  if (!v) GTEST_SKIP() << "AVX2 variant unavailable on this machine";
  const KernelTable& s = voxseg::kernels::scalar_table();
  std::vector<float> src;
  for (std::uint64_t p = 0; p <= 0xFFFFFFFFull; p += 7919) src.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(p)));
  std::vector<std::uint16_t> a(src.size()), b(src.size());
  s.fp16_encode(src.data(), a.data(), src.size());
  v->fp16_encode(src.data(), b.data(), src.size());
  EXPECT_EQ(a, b);

  std::vector<float> ra(src.size()), rb(src.size());
  s.fp16_round(src.data(), ra.data(), src.size());
  v->fp16_round(src.data(), rb.data(), src.size());
  EXPECT_TRUE(same_bits(ra, rb));
}

TEST(Kernels, SimdMatchesScalarOnTileFma) {
  const KernelTable* v = simd_or_skip();
  if (!v) GTEST_SKIP() << "AVX2 variant unavailable on this machine";
  const KernelTable& s = voxseg::kernels::scalar_table();
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> bits(0, 0x7BFF);
  for (int trial = 0; trial < 500; ++trial) {
    std::uint16_t a[16], b[16];
    for (int i = 0; i < 16; ++i) {
      a[i] = static_cast<std::uint16_t>(bits(rng) | (rng() & 0x8000u));
      b[i] = static_cast<std::uint16_t>(bits(rng) | (rng() & 0x8000u));
    }
    auto c = random_floats(16, rng);
    std::vector<float> ds(16), dv(16);
    s.fma_tile4x4(a, b, c.data(), ds.data());
    v->fma_tile4x4(a, b, c.data(), dv.data());
    EXPECT_TRUE(same_bits(ds, dv));
  }
}

}  // namespace
