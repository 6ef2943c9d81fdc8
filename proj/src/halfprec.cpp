// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/halfprec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voxseg/error.hpp"
#include "voxseg/kernels/fp16_codec.hpp"
#include "voxseg/kernels/kernels.hpp"
#include "voxseg/ops.hpp"

namespace voxseg {

Half encode_fp16(float x) { return Half{kernels::encode_fp16_scalar(x)}; }

float decode_fp16(Half h) { return kernels::decode_fp16_scalar(h.bits); }

float round_fp16(float x) { return kernels::decode_fp16_scalar(kernels::encode_fp16_scalar(x)); }

Tensor quantize_tensor(const Tensor& x) {
  Tensor y(x.shape());
  const auto& kt = kernels::active();
  kt.fp16_round(x.values().data(), y.values().data(), x.values().size());
  if (Tape* tape = autograd::recording_tape({&x})) {
    tape->record({x}, y, [x = x, y]() mutable {
      auto dy = y.grad();
      std::vector<float> rounded(dy.size());
      kernels::active().fp16_round(dy.data(), rounded.data(), dy.size());
      auto dx = x.grad_buffer();
      for (std::size_t i = 0; i < rounded.size(); ++i) dx[i] += rounded[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------

PrecisionLevel parse_precision(std::string_view text) {
  if (text == "o0" || text == "O0" || text == "full") return PrecisionLevel::kFull;
  if (text == "o1" || text == "O1" || text == "mixed_safe") return PrecisionLevel::kMixedSafe;
  if (text == "o2" || text == "O2" || text == "mixed_cast") return PrecisionLevel::kMixedCast;
  if (text == "o3" || text == "O3" || text == "half") return PrecisionLevel::kHalf;
  throw ConfigError("unknown precision level '" + std::string(text) + "' (expected o0, o1, o2 or o3)");
}

std::string_view precision_name(PrecisionLevel level) {
  switch (level) {
    case PrecisionLevel::kFull:
      return "o0";
    case PrecisionLevel::kMixedSafe:
      return "o1";
    case PrecisionLevel::kMixedCast:
      return "o2";
    case PrecisionLevel::kHalf:
      return "o3";
  }
  return "o0";
}

bool PrecisionPolicy::fp16_inputs(OpClass op) const {
  if (level_ == PrecisionLevel::kFull) return false;
  return op == OpClass::kConv;
}

bool PrecisionPolicy::fp16_output(OpClass op) const {
  switch (level_) {
    case PrecisionLevel::kFull:
    case PrecisionLevel::kMixedSafe:
      return false;
    case PrecisionLevel::kMixedCast:
      return op == OpClass::kConv || op == OpClass::kPointwise || op == OpClass::kNorm;
    case PrecisionLevel::kHalf:
      return true;
  }
  return false;
}

Tensor PrecisionPolicy::cast_output(const Tensor& x, OpClass op) const {
  return fp16_output(op) ? quantize_tensor(x) : x;
}

// ---------------------------------------------------------------------------

LossScaler::LossScaler(const LossScalerConfig& config) : config_(config), scale_(config.initial_scale) {
  int exponent = 0;
  const float mant = std::frexp(config.initial_scale, &exponent);
  if (!(config.initial_scale >= 1.0f) || mant != 0.5f) {
    throw ConfigError("loss scale must be a power of two >= 1, got " + std::to_string(config.initial_scale));
  }
  if (config.growth_interval < 1) throw ConfigError("loss scale growth interval must be >= 1");
}

StepDecision LossScaler::update(bool grads_finite) {
  if (grads_finite) {
    if (config_.dynamic && ++good_steps_ >= config_.growth_interval) {
      scale_ *= config_.growth_factor;
      good_steps_ = 0;
    }
    return StepDecision::kApply;
  }
  if (config_.dynamic) {
    scale_ = std::max(1.0f, scale_ * config_.backoff_factor);
    good_steps_ = 0;
  }
  return StepDecision::kSkip;
}

StepDecision scaler_step(LossScaler& scaler, bool grads_finite) { return scaler.update(grads_finite); }

Tensor scale_loss(const Tensor& loss, const LossScaler& scaler) {
  if (!(scaler.scale() > 0.0f)) throw ContractError("loss scale must be positive");
  return mul_scalar(loss, scaler.scale());
}

bool unscale_grads(std::span<Tensor> params, const LossScaler& scaler, bool fp16_arithmetic) {
  for (const Tensor& p : params) {
    for (float g : p.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  const float inv = 1.0f / scaler.scale();  // exact for a power of two
  for (Tensor& p : params) {
    for (float& g : p.grad()) {
      g *= inv;
      if (fp16_arithmetic) g = round_fp16(g);
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

MasterWeights::MasterWeights(std::span<Tensor> working, const PrecisionPolicy& policy)
    : enabled_(policy.keeps_master()), fp16_working_(policy.fp16_weights()) {
  if (!enabled_) return;
  masters_.reserve(working.size());
  for (const Tensor& t : working) masters_.emplace_back(t.values().begin(), t.values().end());
}

void MasterWeights::sync(std::span<Tensor> working) const {
  if (!enabled_) return;
  if (working.size() != masters_.size()) throw ContractError("master/working parameter count mismatch");
  for (std::size_t i = 0; i < working.size(); ++i) {
    auto dst = working[i].values();
    if (fp16_working_) {
      kernels::active().fp16_round(masters_[i].data(), dst.data(), dst.size());
    } else {
      std::copy(masters_[i].begin(), masters_[i].end(), dst.begin());
    }
  }
}

// ---------------------------------------------------------------------------

FloatTile fma_mixed(const HalfTile& a, const HalfTile& b, const FloatTile& c) {
  std::uint16_t abits[16];
  std::uint16_t bbits[16];
  for (int i = 0; i < 16; ++i) {
    abits[i] = a[static_cast<std::size_t>(i)].bits;
    bbits[i] = b[static_cast<std::size_t>(i)].bits;
  }
  FloatTile d{};
  kernels::active().fma_tile4x4(abits, bbits, c.data(), d.data());
  return d;
}

}  // namespace voxseg
