// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bevkd/error.hpp"

namespace bevkd {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& build, const ParameterSet& params) {
  Tape tape;
  Binding binding = Binding::frozen(tape, params);
  return build(tape, binding).value().item();
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& build, ParameterSet& params,
                                  const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Binding binding = Binding::trainable(tape, params);
    Var loss = build(tape, binding);
    tape.backward(loss);
    for (std::size_t id = 0; id < params.size(); ++id) analytic.push_back(tape.grad(binding[id]));
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  const double h = options.step;
  for (std::size_t id = 0; id < params.size(); ++id) {
    Tensor& value = params.value(id);
    std::vector<std::size_t> entries(value.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (options.max_entries_per_parameter && entries.size() > options.max_entries_per_parameter) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_parameter);
      std::sort(entries.begin(), entries.end());
    }

    ParameterGradError err;
    err.name = params.name(id);
    for (std::size_t e : entries) {
      const double original = value[e];
      value[e] = original + h;
      const double up = evaluate(build, params);
      value[e] = original - h;
      const double down = evaluate(build, params);
      value[e] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[id][e];
      const double rel = relative_error(a, numeric, options.relative_floor);
      if (!std::isfinite(rel)) throw RuntimeError("gradient check produced a non-finite value for " + err.name);
      if (rel >= err.max_relative_error) {
        err.max_relative_error = rel;
        err.worst_index = e;
        err.analytic = a;
        err.numeric = numeric;
      }
      ++err.entries_checked;
    }
    if (err.max_relative_error >= report.max_relative_error) {
      report.max_relative_error = err.max_relative_error;
      report.worst_parameter = err.name;
      report.worst_index = err.worst_index;
    }
    report.parameters.push_back(std::move(err));
  }
  return report;
}

Var corrupt_gradient(Var x, double factor) {
  return x.tape().record(x.value(), {x}, [factor](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
    Tensor& gx = *in[0];
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

}  // namespace bevkd
