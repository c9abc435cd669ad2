// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace bevkd {

// Bad input: malformed config, shape mismatch, out-of-contract argument.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Failure while running: I/O, numeric breakdown, missing data.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bevkd
