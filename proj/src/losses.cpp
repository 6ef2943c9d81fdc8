// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "voxseg/error.hpp"
#include "voxseg/ops.hpp"

namespace voxseg {

LossKind parse_loss_kind(std::string_view text) {
  if (text == "ce") return LossKind::kCrossEntropy;
  if (text == "dice") return LossKind::kDice;
  if (text == "combined") return LossKind::kCombined;
  throw ConfigError("unknown loss '" + std::string(text) + "' (expected ce, dice or combined)");
}

std::string_view loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropy:
      return "ce";
    case LossKind::kDice:
      return "dice";
    case LossKind::kCombined:
      return "combined";
  }
  return "ce";
}

namespace {

void check_pair(const Tensor& p, const Tensor& y, const char* op) {
  if (p.shape() != y.shape()) {
    throw ShapeError(std::string(op) + ": prediction " + p.shape().str() + " vs target " + y.shape().str());
  }
  if (p.shape().voxels() < 1 || p.shape().c < 1 || p.shape().n < 1) {
    throw ShapeError(std::string(op) + ": empty input " + p.shape().str());
  }
}

}  // namespace

Tensor cross_entropy(const Tensor& p, const Tensor& y, float log_floor) {
  check_pair(p, y, "cross_entropy");
  if (!(log_floor > 0.0f)) throw ConfigError("cross_entropy: log_floor must be positive");
  const Shape& s = p.shape();
  const double norm = 1.0 / static_cast<double>(s.voxels() * s.n);
  auto pv = p.values();
  auto yv = y.values();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (yv[i] != 0.0f) total += static_cast<double>(yv[i]) * std::log(std::max(pv[i], log_floor));
  }
  Tensor loss = Tensor::scalar(static_cast<float>(-total * norm));

  if (Tape* tape = autograd::recording_tape({&p})) {
    tape->record({p, y}, loss, [p, y, loss, log_floor, norm]() mutable {
      const double g = loss.grad()[0];
      auto pv = p.values();
      auto yv = y.values();
      auto dp = p.grad_buffer();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        if (yv[i] != 0.0f && pv[i] > log_floor) {
          dp[i] += static_cast<float>(-g * norm * yv[i] / pv[i]);
        }
      }
    });
  }
  return loss;
}

Tensor dice_loss(const Tensor& p, const Tensor& y, float eps) {
  check_pair(p, y, "dice_loss");
  if (!(eps > 0.0f)) throw ConfigError("dice_loss: epsilon must be positive");
  const Shape& s = p.shape();
  const std::int64_t vox = s.voxels();
  const auto classes = static_cast<std::size_t>(s.c);
  // Per (sample, class): intersection and cardinality sums.
  std::vector<double> inter(static_cast<std::size_t>(s.n) * classes);
  std::vector<double> card(inter.size());
  double total = 0.0;
  for (std::int64_t n = 0; n < s.n; ++n) {
    double sample = 0.0;
    for (std::int64_t c = 0; c < s.c; ++c) {
      const float* pp = p.plane(n, c);
      const float* yp = y.plane(n, c);
      double i_sum = 0.0;
      double u_sum = 0.0;
      for (std::int64_t v = 0; v < vox; ++v) {
        i_sum += static_cast<double>(yp[v]) * pp[v];
        u_sum += static_cast<double>(yp[v]) + pp[v];
      }
      const auto k = static_cast<std::size_t>(n) * classes + static_cast<std::size_t>(c);
      inter[k] = i_sum;
      card[k] = u_sum;
      sample += (eps + 2.0 * i_sum) / (eps + u_sum);
    }
    total += 1.0 - sample / static_cast<double>(s.c);
  }
  Tensor loss = Tensor::scalar(static_cast<float>(total / static_cast<double>(s.n)));

  if (Tape* tape = autograd::recording_tape({&p})) {
    tape->record({p, y}, loss, [p, y, loss, eps, inter = std::move(inter), card = std::move(card)]() mutable {
      const Shape& s = p.shape();
      const std::int64_t vox = s.voxels();
      const double g = loss.grad()[0] / (static_cast<double>(s.n) * static_cast<double>(s.c));
      auto dp = p.grad_buffer();
      for (std::int64_t n = 0; n < s.n; ++n) {
        for (std::int64_t c = 0; c < s.c; ++c) {
          const auto k = static_cast<std::size_t>(n * s.c + c);
          const double den = eps + card[k];
          const double num = eps + 2.0 * inter[k];
          const float* yp = y.plane(n, c);
          float* d = dp.data() + (n * s.c + c) * vox;
          for (std::int64_t v = 0; v < vox; ++v) {
            // d/dp of num/den is (2 y den - num) / den^2; the loss subtracts it.
            d[v] += static_cast<float>(-g * (2.0 * yp[v] * den - num) / (den * den));
          }
        }
      }
    });
  }
  return loss;
}

Tensor combined_loss(const Tensor& p, const Tensor& y, const LossConfig& config) {
  return add(cross_entropy(p, y, config.log_floor), dice_loss(p, y, config.dice_epsilon));
}

Tensor compute_loss(const Tensor& p, const Tensor& y, const LossConfig& config) {
  switch (config.kind) {
    case LossKind::kCrossEntropy:
      return cross_entropy(p, y, config.log_floor);
    case LossKind::kDice:
      return dice_loss(p, y, config.dice_epsilon);
    case LossKind::kCombined:
      return combined_loss(p, y, config);
  }
  throw ConfigError("unknown loss kind");
}

}  // namespace voxseg
