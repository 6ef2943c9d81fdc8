// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxseg/error.hpp"
#include "voxseg/halfprec.hpp"

namespace voxseg {

struct RAdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  void validate() const;
};

/// Step-dependent scalars of a rectified Adam update.
struct RAdamSchedule {
  double bias_correction1 = 1.0;
  double bias_correction2 = 1.0;
  double rho_inf = 0.0;
  double rho_t = 0.0;
  /// True when rho_t > 4 and the variance-rectified step applies.
  bool rectified = false;
  double rect = 0.0;
};

RAdamSchedule radam_schedule(const RAdamConfig& config, std::int64_t t);

/// Arithmetic in the storage type.
struct ExactArithmetic {
  template <class T>
  T operator()(T x) const {
    return x;
  }
};

/// Every intermediate rounded to FP16.
struct HalfArithmetic {
  float operator()(float x) const { return round_fp16(x); }
};

/// Rectified Adam without weight decay. `T` is the storage type and `R` the
/// rounding applied after every arithmetic operation.
template <class T, class R = ExactArithmetic>
class RAdam {
 public:
  RAdam(const RAdamConfig& config, const std::vector<std::size_t>& sizes) : config_(config) {
    config_.validate();
    for (auto n : sizes) {
      m_.emplace_back(n, T(0));
      v_.emplace_back(n, T(0));
    }
  }

  std::int64_t t() const { return t_; }
  const RAdamConfig& config() const { return config_; }
  std::span<const T> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const T> second_moment(std::size_t i) const { return v_[i]; }

  /// One update of every parameter. Gradients must be finite.
  void step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw ContractError("RAdam::step: parameter count differs from the optimizer state");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (params[i].size() != m_[i].size() || grads[i].size() != m_[i].size()) {
        throw ContractError("RAdam::step: parameter " + std::to_string(i) + " changed size");
      }
      for (T g : grads[i]) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw ContractError("RAdam::step: non-finite gradient reached the optimizer");
        }
      }
    }
    ++t_;
    const RAdamSchedule s = radam_schedule(config_, t_);
    const R r{};
    const T b1 = r(static_cast<T>(config_.beta1));
    const T b2 = r(static_cast<T>(config_.beta2));
    const T one_b1 = r(static_cast<T>(1.0 - config_.beta1));
    const T one_b2 = r(static_cast<T>(1.0 - config_.beta2));
    const T bc1 = r(static_cast<T>(s.bias_correction1));
    const T lr = r(static_cast<T>(config_.lr));
    const T eps = r(static_cast<T>(config_.eps));
    const T rect = r(static_cast<T>(s.rect));
    const T sqrt_bc2 = r(static_cast<T>(std::sqrt(s.bias_correction2)));

    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < m.size(); ++k) {
        const T g = grads[i][k];
        m[k] = r(r(b1 * m[k]) + r(one_b1 * g));
        v[k] = r(r(b2 * v[k]) + r(r(one_b2 * g) * g));
        const T m_hat = r(m[k] / bc1);
        T update;
        if (s.rectified) {
          const T adaptive = r(sqrt_bc2 / r(r(static_cast<T>(std::sqrt(v[k]))) + eps));
          update = r(r(r(lr * m_hat) * rect) * adaptive);
        } else {
          update = r(lr * m_hat);
        }
        params[i][k] = r(params[i][k] - update);
      }
    }
  }

 private:
  RAdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace voxseg
