// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "half_oracle.hpp"
#include "oracles.hpp"
#include "voxseg/error.hpp"
#include "voxseg/halfprec.hpp"
#include "voxseg/ops.hpp"

namespace {

using namespace voxseg;

std::uint32_t bits(float x) { return std::bit_cast<std::uint32_t>(x); }

TEST(Fp16Codec, KnownPatterns) {
  EXPECT_EQ(encode_fp16(1.0f).bits, 0x3C00);
  EXPECT_EQ(encode_fp16(-2.0f).bits, 0xC000);
  EXPECT_EQ(encode_fp16(65504.0f).bits, 0x7BFF);
  EXPECT_EQ(encode_fp16(kHalfMinNormal).bits, 0x0400);
  EXPECT_EQ(encode_fp16(kHalfMinSubnormal).bits, 0x0001);
  EXPECT_EQ(encode_fp16(-0.0f).bits, 0x8000);
  EXPECT_EQ(encode_fp16(std::numeric_limits<float>::infinity()).bits, 0x7C00);
  EXPECT_EQ(decode_fp16(Half{0x7BFF}), 65504.0f);
  EXPECT_EQ(decode_fp16(Half{0x0400}), 6.103515625e-05f);
  EXPECT_TRUE(std::isnan(round_fp16(std::numeric_limits<float>::quiet_NaN())));
}

TEST(Fp16Codec, FieldAccessors) {
  const Half h = encode_fp16(-1.5f);
  EXPECT_EQ(h.sign(), 1u);
  EXPECT_EQ(h.exponent(), 15u);
  EXPECT_EQ(h.mantissa(), 0x200u);
}

TEST(Fp16Codec, RoundingBoundaries) {
  EXPECT_EQ(round_fp16(65519.0f), 65504.0f);
  EXPECT_TRUE(std::isinf(round_fp16(65520.0f)));
  EXPECT_TRUE(std::isinf(round_fp16(1e5f)));
  EXPECT_EQ(bits(round_fp16(std::ldexp(1.0f, -25))), bits(0.0f));  // tie to even (zero)
  EXPECT_EQ(round_fp16(std::ldexp(1.5f, -25)), kHalfMinSubnormal);
  EXPECT_EQ(round_fp16(1.0f + std::ldexp(1.0f, -11)), 1.0f);             // tie, even stays
  EXPECT_EQ(round_fp16(1.0f + 3 * std::ldexp(1.0f, -11)), 1.0f + std::ldexp(1.0f, -9));
}

TEST(Fp16Codec, ExhaustiveDecodeMatchesFormula) {
  for (std::uint32_t b = 0; b < 65536; ++b) {
    const float f = decode_fp16(Half{static_cast<std::uint16_t>(b)});
    const double ref = oracle::half_value(static_cast<std::uint16_t>(b));
    if (std::isnan(ref)) {
      ASSERT_TRUE(std::isnan(f)) << b;
    } else {
      ASSERT_EQ(static_cast<double>(f), ref) << b;
      ASSERT_EQ(std::signbit(f), (b & 0x8000) != 0) << b;
    }
  }
}

TEST(Fp16Codec, ExhaustiveRoundTripIsIdentity) {
  for (std::uint32_t b = 0; b < 65536; ++b) {
    const Half h{static_cast<std::uint16_t>(b)};
    const bool nan = h.exponent() == 31 && h.mantissa() != 0;
    const Half back = encode_fp16(decode_fp16(h));
    if (nan) {
      ASSERT_EQ(back.exponent(), 31u);
      ASSERT_NE(back.mantissa(), 0u);
    } else {
      ASSERT_EQ(back.bits, h.bits) << b;
    }
  }
}

TEST(Fp16Codec, EncodeMatchesNearestValueSearch) {
  std::mt19937 rng(17);
  std::uniform_int_distribution<std::uint32_t> pattern;
  int checked = 0;
  while (checked < 200000) {
    const float x = std::bit_cast<float>(pattern(rng));
    if (std::isnan(x)) continue;
    const std::uint16_t ref = oracle::half_bits_nearest(x);
    ASSERT_EQ(encode_fp16(x).bits, ref) << std::hexfloat << x;
    ++checked;
  }
  // Midpoints between every pair of adjacent finite halves.
  for (std::uint16_t b = 0; b < 0x7BFF; ++b) {
    const double mid = (oracle::half_value(b) + oracle::half_value(b + 1)) / 2;
    const float x = static_cast<float>(mid);
    ASSERT_EQ(static_cast<double>(x), mid);
    ASSERT_EQ(encode_fp16(x).bits, oracle::half_bits_nearest(mid)) << b;
  }
}

TEST(Fp16Codec, EncodeIsMonotone) {
  float prev = round_fp16(-70000.0f);
  for (float x = -70000.0f; x < 70000.0f; x += 0.731f) {
    const float r = round_fp16(x);
    ASSERT_GE(r, prev) << x;
    prev = r;
  }
}

TEST(Quantize, RoundsElementsAndPassesGradientThrough) {
  Tensor x(Shape{1, 1, {1, 1, 4}}, {1.0f + std::ldexp(1.0f, -12), 1e5f, std::ldexp(1.0f, -25), -3.0f});
  x.set_requires_grad(true);
  Tape tape;
  TapeScope scope(tape);
  Tensor y = quantize_tensor(x);
  EXPECT_EQ(y.values()[0], 1.0f);
  EXPECT_TRUE(std::isinf(y.values()[1]));
  EXPECT_EQ(y.values()[2], 0.0f);
  EXPECT_EQ(y.values()[3], -3.0f);

  tape.clear();
  x.drop_grad();
  tape.backward(sum(mul_scalar(quantize_tensor(x), 0.1f)));
  for (float g : x.grad()) EXPECT_EQ(g, round_fp16(0.1f));
}

TEST(Policy, CastTable) {
  const PrecisionPolicy full(PrecisionLevel::kFull), safe(PrecisionLevel::kMixedSafe),
      cast(PrecisionLevel::kMixedCast), half(PrecisionLevel::kHalf);
  for (auto op : {OpClass::kConv, OpClass::kPointwise, OpClass::kNorm, OpClass::kSoftmax, OpClass::kLoss}) {
    EXPECT_FALSE(full.fp16_inputs(op));
    EXPECT_FALSE(full.fp16_output(op));
    EXPECT_FALSE(safe.fp16_output(op));
    EXPECT_TRUE(half.fp16_output(op));
  }
  EXPECT_TRUE(safe.fp16_inputs(OpClass::kConv));
  EXPECT_TRUE(cast.fp16_output(OpClass::kConv));
  EXPECT_FALSE(cast.fp16_output(OpClass::kSoftmax));
  EXPECT_FALSE(cast.fp16_output(OpClass::kLoss));
  EXPECT_TRUE(full.keeps_master() && safe.keeps_master() && cast.keeps_master());
  EXPECT_FALSE(half.keeps_master());
  EXPECT_TRUE(half.fp16_optimizer());
  EXPECT_FALSE(cast.fp16_optimizer());
  EXPECT_TRUE(cast.fp16_weights());
  EXPECT_FALSE(safe.fp16_weights());
}

TEST(Policy, ParsesLevelNames) {
  EXPECT_EQ(parse_precision("o0"), PrecisionLevel::kFull);
  EXPECT_EQ(parse_precision("mixed_safe"), PrecisionLevel::kMixedSafe);
  EXPECT_EQ(parse_precision("O2"), PrecisionLevel::kMixedCast);
  EXPECT_EQ(parse_precision("half"), PrecisionLevel::kHalf);
  EXPECT_THROW(parse_precision("o4"), ConfigError);
  EXPECT_EQ(precision_name(PrecisionLevel::kHalf), "o3");
}

TEST(LossScaler, GrowsAfterIntervalAndBacksOffToOne) {
  LossScaler s(LossScalerConfig{4.0f, 2.0f, 0.5f, 3, true});
  EXPECT_EQ(s.update(true), StepDecision::kApply);
  EXPECT_EQ(s.update(true), StepDecision::kApply);
  EXPECT_EQ(s.scale(), 4.0f);
  s.update(true);
  EXPECT_EQ(s.scale(), 8.0f);
  EXPECT_EQ(s.good_steps(), 0);
  s.update(true);
  EXPECT_EQ(s.update(false), StepDecision::kSkip);
  EXPECT_EQ(s.scale(), 4.0f);
  EXPECT_EQ(s.good_steps(), 0);
  for (int i = 0; i < 10; ++i) s.update(false);
  EXPECT_EQ(s.scale(), 1.0f);
}

TEST(LossScaler, StaticScaleNeverMoves) {
  LossScaler s(LossScalerConfig{256.0f, 2.0f, 0.5f, 1, false});
  EXPECT_EQ(scaler_step(s, false), StepDecision::kSkip);
  EXPECT_EQ(scaler_step(s, true), StepDecision::kApply);
  EXPECT_EQ(s.scale(), 256.0f);
}

TEST(LossScaler, RejectsNonPowerOfTwo) {
  EXPECT_THROW(LossScaler(LossScalerConfig{3.0f}), ConfigError);
  EXPECT_THROW(LossScaler(LossScalerConfig{0.5f}), ConfigError);
}

TEST(LossScaler, UnscaleLeavesGradsOnOverflow) {
  Tensor p(Shape{1, 1, {1, 1, 2}});
  p.grad_buffer()[0] = 8.0f;
  p.grad_buffer()[1] = std::numeric_limits<float>::infinity();
  LossScaler s(LossScalerConfig{4.0f});
  std::vector<Tensor> ps{p};
  EXPECT_FALSE(unscale_grads(ps, s));
  EXPECT_EQ(p.grad()[0], 8.0f);
  p.grad_buffer()[1] = 4.0f;
  EXPECT_TRUE(unscale_grads(ps, s));
  EXPECT_EQ(p.grad()[0], 2.0f);
  EXPECT_EQ(p.grad()[1], 1.0f);
}

// Power-of-two scaling of a linear model leaves FP32 gradients bit-identical.
TEST(LossScaler, PowerOfTwoScalingIsNeutralInFp32) {
  std::mt19937_64 rng(2);
  Tensor x = oracle::random_tensor(Shape{1, 2, {4, 4, 4}}, rng);
  Tensor w = oracle::random_tensor(Shape{3, 2, {3, 3, 3}}, rng);
  std::vector<float> reference;
  for (float scale : {1.0f, 256.0f, 65536.0f}) {
    w.drop_grad();
    w.set_requires_grad(true);
    LossScaler s(LossScalerConfig{scale, 2.0f, 0.5f, 2000, false});
    {
      Tape tape;
      TapeScope scope(tape);
      Tensor y = conv3d(x, w, Tensor(), ConvParams{1, 1, false});
      tape.backward(scale_loss(sum(mul_scalar(y, 0.01f)), s));
    }
    std::vector<Tensor> ps{w};
    ASSERT_TRUE(unscale_grads(ps, s));
    std::vector<float> g(w.grad().begin(), w.grad().end());
    if (reference.empty()) {
      reference = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) ASSERT_EQ(bits(g[i]), bits(reference[i])) << scale;
    }
  }
}

TEST(MasterWeights, KeepsFp32MasterAndRoundsWorkingCopy) {
  Tensor w(Shape{1, 1, {1, 1, 2}}, {1.0f, 2.0f});
  std::vector<Tensor> working{w};
  MasterWeights m(working, PrecisionPolicy(PrecisionLevel::kMixedCast));
  ASSERT_TRUE(m.enabled());
  m.master(0)[0] = 1.0f + std::ldexp(1.0f, -20);
  m.sync(working);
  EXPECT_EQ(w.values()[0], 1.0f);
  EXPECT_EQ(m.master(0)[0], 1.0f + std::ldexp(1.0f, -20));

  MasterWeights safe(working, PrecisionPolicy(PrecisionLevel::kMixedSafe));
  safe.master(0)[0] = 1.0f + std::ldexp(1.0f, -20);
  safe.sync(working);
  EXPECT_EQ(w.values()[0], 1.0f + std::ldexp(1.0f, -20));

  MasterWeights none(working, PrecisionPolicy(PrecisionLevel::kHalf));
  EXPECT_FALSE(none.enabled());
}

TEST(TileFma, MatchesFp32ProductOfDecodedOperands) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<float> u(-4.0f, 4.0f);
  HalfTile a, b;
  FloatTile c;
  for (int i = 0; i < 16; ++i) {
    a[i] = encode_fp16(u(rng));
    b[i] = encode_fp16(u(rng));
    c[i] = u(rng);
  }
  const FloatTile d = fma_mixed(a, b, c);
  for (int r = 0; r < 4; ++r) {
    for (int col = 0; col < 4; ++col) {
      float acc = 0.0f;
      for (int k = 0; k < 4; ++k) {
        const float p = decode_fp16(a[r * 4 + k]) * decode_fp16(b[k * 4 + col]);
        acc = k == 0 ? p : acc + p;
      }
      EXPECT_EQ(bits(d[r * 4 + col]), bits(acc + c[r * 4 + col]));
    }
  }
}

}  // namespace
