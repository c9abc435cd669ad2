// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/nn.hpp"

#include <cmath>

namespace bevkd {

Tensor normal_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t({rows, cols});
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor identity_tensor(std::size_t rows, std::size_t cols) {
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) t(i, i) = 1.0;
  return t;
}

Linear Linear::create(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out,
                      std::mt19937_64& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = params.add(name + ".weight", normal_tensor(rng, in, out, std::sqrt(2.0 / static_cast<double>(in))));
  l.bias = params.add(name + ".bias", Tensor({1, out}));
  return l;
}

Linear Linear::create_identity(ParameterSet& params, const std::string& name, std::size_t in, std::size_t out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = params.add(name + ".weight", identity_tensor(in, out));
  l.bias = params.add(name + ".bias", Tensor({1, out}));
  return l;
}

}  // namespace bevkd
