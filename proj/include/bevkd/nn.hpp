// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "bevkd/ops.hpp"

namespace bevkd {

// Matrix of shape rows×cols with entries N(0, stddev²).
Tensor normal_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev);
// rows×cols with ones on the leading diagonal.
Tensor identity_tensor(std::size_t rows, std::size_t cols);

/// y = x·W + b with W (in×out) and b (1×out).
struct Linear {
  ParameterSet::Id weight = 0;
  ParameterSet::Id bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  // He-style init: W ~ N(0, 2/in), b = 0.
  static Linear create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng);
  static Linear create_identity(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out);

  Var operator()(const Binding& b, Var x) const { return add_row(matmul(x, b[weight]), b[bias]); }
};

}  // namespace bevkd
