// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxseg/tensor.hpp"

namespace voxseg {

/// IEEE 754 binary16: 1 sign bit, 5 exponent bits (bias 15), 10 mantissa bits.
struct Half {
  std::uint16_t bits = 0;

  unsigned sign() const { return bits >> 15; }
  unsigned exponent() const { return (bits >> 10) & 0x1Fu; }
  unsigned mantissa() const { return bits & 0x3FFu; }
  bool operator==(const Half&) const = default;
};

inline constexpr float kHalfMax = 65504.0f;
inline constexpr float kHalfMinNormal = 6.103515625e-05f;      // 2^-14
inline constexpr float kHalfMinSubnormal = 5.9604644775390625e-08f;  // 2^-24

Half encode_fp16(float x);
float decode_fp16(Half h);
/// decode(encode(x)).
float round_fp16(float x);

/// Replaces every element by its nearest FP16 value. Differentiable: the
/// gradient passes straight through and is itself rounded to FP16, which is
/// how an FP16-stored activation sees its gradient.
Tensor quantize_tensor(const Tensor& x);

// ---------------------------------------------------------------------------
// Precision policy

enum class PrecisionLevel { kFull, kMixedSafe, kMixedCast, kHalf };

/// Parses "o0".."o3" (also "full", "mixed_safe", "mixed_cast", "half").
PrecisionLevel parse_precision(std::string_view text);
std::string_view precision_name(PrecisionLevel level);

/// Operation classes the cast table distinguishes.
enum class OpClass { kConv, kPointwise, kNorm, kSoftmax, kLoss };

/// Which tensors pass through FP16 for a given precision level.
///
///   level        conv inputs  activations      weights        optimizer
///   FULL  (O0)   fp32         fp32             fp32           fp32
///   MIXED_SAFE   fp16         fp32             fp32 master    fp32
///   MIXED_CAST   fp16         fp16 except      fp16 working,  fp32
///                             softmax/loss     fp32 master
///   HALF  (O3)   fp16         fp16             fp16, no       fp16 arithmetic
///                                              master
class PrecisionPolicy {
 public:
  explicit PrecisionPolicy(PrecisionLevel level = PrecisionLevel::kFull) : level_(level) {}

  PrecisionLevel level() const { return level_; }
  bool fp16_inputs(OpClass op) const;
  bool fp16_output(OpClass op) const;
  bool fp16_weights() const { return level_ == PrecisionLevel::kMixedCast || level_ == PrecisionLevel::kHalf; }
  bool keeps_master() const { return level_ != PrecisionLevel::kHalf; }
  bool fp16_optimizer() const { return level_ == PrecisionLevel::kHalf; }
  bool fp16_grads() const { return fp16_weights(); }

  /// `x` rounded to FP16 when the policy stores op's output in half.
  Tensor cast_output(const Tensor& x, OpClass op) const;

 private:
  PrecisionLevel level_;
};

// ---------------------------------------------------------------------------
// Dynamic loss scaling

struct LossScalerConfig {
  float initial_scale = 65536.0f;
  float growth_factor = 2.0f;
  float backoff_factor = 0.5f;
  int growth_interval = 2000;
  bool dynamic = true;
};

enum class StepDecision { kApply, kSkip };

class LossScaler {
 public:
  explicit LossScaler(const LossScalerConfig& config = {});

  float scale() const { return scale_; }
  int good_steps() const { return good_steps_; }
  const LossScalerConfig& config() const { return config_; }

  /// Grows the scale after `growth_interval` consecutive finite steps and
  /// backs it off (never below 1) on overflow. A static scaler only reports
  /// the decision.
  StepDecision update(bool grads_finite);

 private:
  LossScalerConfig config_;
  float scale_;
  int good_steps_ = 0;
};

StepDecision scaler_step(LossScaler& scaler, bool grads_finite);

/// loss * scale, recorded on the tape.
Tensor scale_loss(const Tensor& loss, const LossScaler& scaler);

/// Divides every gradient by the scale in place. Returns false if any
/// gradient is non-finite; the gradients are then left as they were.
bool unscale_grads(std::span<Tensor> params, const LossScaler& scaler, bool fp16_arithmetic = false);

// ---------------------------------------------------------------------------
// Master weights

/// FP32 master copies of the trainable parameters. The optimizer updates the
/// masters; `sync()` refreshes the working tensors the network computes with
/// (rounded to FP16 under policies with FP16 weights).
class MasterWeights {
 public:
  MasterWeights(std::span<Tensor> working, const PrecisionPolicy& policy);

  bool enabled() const { return enabled_; }
  std::size_t size() const { return masters_.size(); }
  std::span<float> master(std::size_t i) { return masters_[i]; }
  std::span<const float> master(std::size_t i) const { return masters_[i]; }

  /// Working copy <- round(master) (or master verbatim under FP32 weights).
  void sync(std::span<Tensor> working) const;

 private:
  bool enabled_;
  bool fp16_working_;
  std::vector<std::vector<float>> masters_;
};

// ---------------------------------------------------------------------------
// Tensor-core style tile

using HalfTile = std::array<Half, 16>;
using FloatTile = std::array<float, 16>;

/// D = A * B + C for row-major 4x4 tiles: FP16 operands, FP32 products and
/// accumulation.
FloatTile fma_mixed(const HalfTile& a, const HalfTile& b, const FloatTile& c);

}  // namespace voxseg
