// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "bevkd/tape.hpp"

namespace bevkd {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // `grads[i]` matches parameter id i.
  virtual void step(ParameterSet& params, const std::vector<Tensor>& grads) = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(ParameterSet& params, const std::vector<Tensor>& grads) override;

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(ParameterSet& params, const std::vector<Tensor>& grads) override;

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// "sgd" or "adam".
std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr);

}  // namespace bevkd
