// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/error.hpp"

#include <utility>

namespace voxseg {

Error::Error(std::string kind, const std::string& message)
    : std::runtime_error(message), kind_(std::move(kind)) {}

}  // namespace voxseg
