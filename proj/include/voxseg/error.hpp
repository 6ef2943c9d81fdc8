// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace voxseg {

/// Base of every error thrown by the library. `kind()` is a stable short tag
/// used by the CLI for its machine-parseable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message);
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define VOXSEG_DECLARE_ERROR(Name, tag)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(tag, message) {}    \
  }

VOXSEG_DECLARE_ERROR(FormatError, "format");
VOXSEG_DECLARE_ERROR(UnsupportedError, "unsupported");
VOXSEG_DECLARE_ERROR(TruncationError, "truncation");
VOXSEG_DECLARE_ERROR(ValidationError, "validation");
VOXSEG_DECLARE_ERROR(IoError, "io");
VOXSEG_DECLARE_ERROR(DegenerateInputError, "degenerate-input");
VOXSEG_DECLARE_ERROR(ShapeError, "shape");
VOXSEG_DECLARE_ERROR(ContractError, "contract");
VOXSEG_DECLARE_ERROR(ConfigError, "config");
VOXSEG_DECLARE_ERROR(CheckpointError, "checkpoint");

#undef VOXSEG_DECLARE_ERROR

}  // namespace voxseg
