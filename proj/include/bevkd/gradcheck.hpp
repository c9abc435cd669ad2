// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bevkd/tape.hpp"

namespace bevkd {

// Builds a scalar loss on `tape` from bound parameters. Must be deterministic.
using LossBuilder = std::function<Var(Tape& tape, const Binding& params)>;

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double relative_floor = 1e-3;
  // Check at most this many entries per parameter tensor (0 = all), chosen
  // with a seeded shuffle.
  std::size_t max_entries_per_parameter = 0;
  std::uint64_t seed = 0;
};

struct ParameterGradError {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

struct GradCheckReport {
  std::vector<ParameterGradError> parameters;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;

  bool passed(double tolerance) const { return max_relative_error < tolerance; }
};

double relative_error(double analytic, double numeric, double floor);

// Compares tape gradients of `build` against central differences
// (f(p+h) − f(p−h)) / 2h for every parameter in `params`.
GradCheckReport finite_diff_check(const LossBuilder& build, ParameterSet& params,
                                  const GradCheckOptions& options = {});

// Identity in the forward pass; scales the gradient by `factor` on the way
// back. Only useful as a negative control for the checker.
Var corrupt_gradient(Var x, double factor);

}  // namespace bevkd
