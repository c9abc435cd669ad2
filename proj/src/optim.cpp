// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/optim.hpp"

#include <cmath>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

void check(const ParameterSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) throw ValidationError("optimizer: gradient count differs from parameter count");
  for (std::size_t i = 0; i < grads.size(); ++i) require_same_shape(params.value(i), grads[i], "optimizer");
}

}  // namespace

void Sgd::step(ParameterSet& params, const std::vector<Tensor>& grads) {
  check(params, grads);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr_ * g[k];
  }
}

void Adam::step(ParameterSet& params, const std::vector<Tensor>& grads) {
  check(params, grads);
  if (m_.empty()) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      m_.push_back(Tensor::zeros_like(grads[i]));
      v_.push_back(Tensor::zeros_like(grads[i]));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1_ * m[k] + (1.0 - b1_) * g[k];
      v[k] = b2_ * v[k] + (1.0 - b2_) * g[k] * g[k];
      p[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr) {
  if (name == "sgd") return std::make_unique<Sgd>(lr);
  if (name == "adam") return std::make_unique<Adam>(lr);
  throw ValidationError("unknown optimizer '" + name + "'");
}

}  // namespace bevkd
