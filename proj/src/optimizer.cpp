// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/optimizer.hpp"

namespace voxseg {

void RAdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(eps >= 0.0)) throw ConfigError("eps must be >= 0");
}

RAdamSchedule radam_schedule(const RAdamConfig& c, std::int64_t t) {
  RAdamSchedule s;
  const auto td = static_cast<double>(t);
  const double b2t = std::pow(c.beta2, td);
  s.bias_correction1 = 1.0 - std::pow(c.beta1, td);
  s.bias_correction2 = 1.0 - b2t;
  s.rho_inf = 2.0 / (1.0 - c.beta2) - 1.0;
  s.rho_t = s.rho_inf - 2.0 * td * b2t / s.bias_correction2;
  s.rectified = s.rho_t > 4.0;
  if (s.rectified) {
    s.rect = std::sqrt((s.rho_t - 4.0) * (s.rho_t - 2.0) * s.rho_inf /
                       ((s.rho_inf - 4.0) * (s.rho_inf - 2.0) * s.rho_t));
  }
  return s;
}

}  // namespace voxseg
