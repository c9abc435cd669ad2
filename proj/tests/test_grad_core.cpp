// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "bevkd/error.hpp"
#include "bevkd/gradcheck.hpp"
#include "bevkd/ops.hpp"
#include "test_util.hpp"

using namespace bevkd;
using bevkd::testing::random_matrix;

namespace {

// Checks a unary/binary op by gradient-checking sum(op(...) ∘ W) for a random W.
GradCheckReport check_with_projection(ParameterSet& params, std::function<Var(const Binding&)> op,
                                      std::uint64_t seed) {
  Tape probe;
  Shape out_shape = op(Binding::frozen(probe, params)).shape();
  std::mt19937_64 rng(seed);
  Tensor w = out_shape.empty() ? Tensor::scalar(1.3) : random_matrix(rng, out_shape[0], out_shape[1]);
  return finite_diff_check(
      [&](Tape& tape, const Binding& b) { return sum(mul(op(b), tape.constant(w))); }, params);
}

}  // namespace

TEST_CASE("matmul hand cases") {
  Tape tape;
  auto a = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  auto b = tape.constant(Tensor::matrix({{2, 3}, {4, 5}}));
  CHECK(matmul(a, b).value() == Tensor::matrix({{2, 3}, {4, 5}}));
  auto c = tape.constant(Tensor::matrix({{1, 2}}));
  auto d = tape.constant(Tensor::matrix({{3}, {4}}));
  CHECK(matmul(c, d).value().item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  auto a = tape.constant(Tensor({2, 3}));
  auto b = tape.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected throw");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("vs [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng(11);
  ParameterSet p;
  auto a = p.add("a", random_matrix(rng, 3, 4));
  auto b = p.add("b", random_matrix(rng, 4, 2));
  auto report = check_with_projection(p, [&](const Binding& x) { return matmul(x[a], x[b]); }, 12);
  CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("softmax_rows basic cases") {
  Tape tape;
  auto y = softmax_rows(tape.constant(Tensor::matrix({{0, 0, 0}, {1000, 0, 0}}))).value();
  for (int j = 0; j < 3; ++j) CHECK(y(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(y(1, 0) == 1.0);
  CHECK(y(1, 1) >= 0.0);
  CHECK(y(1, 1) < 1e-300);
  CHECK(y.all_finite());
}

TEST_CASE("softmax_rows matches a 50-digit evaluation") {
  using boost::multiprecision::cpp_bin_float_50;
  Tape tape;
  auto y = softmax_rows(tape.constant(Tensor::matrix({{1, 2, 3}}))).value();
  cpp_bin_float_50 e[3] = {exp(cpp_bin_float_50(1)), exp(cpp_bin_float_50(2)), exp(cpp_bin_float_50(3))};
  cpp_bin_float_50 total = e[0] + e[1] + e[2];
  for (int j = 0; j < 3; ++j) {
    double ref = static_cast<double>(e[j] / total);
    CHECK(std::abs(y(0, j) - ref) < 1e-15);
  }
}

TEST_CASE("softmax_rows rows sum to one and ignore constant shifts") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_matrix(rng, 4, 7, -5, 5);
    Tensor shifted = x;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 7; ++j) shifted(i, j) += 3.25 * static_cast<double>(i + 1);
    Tape tape;
    auto y = softmax_rows(tape.constant(x)).value();
    auto ys = softmax_rows(tape.constant(shifted)).value();
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (double v : y.row(i)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK(bevkd::testing::max_abs_diff(y, ys) < 1e-12);
  }
}

TEST_CASE("softmax composed with mse gradient") {
  std::mt19937_64 rng(21);
  ParameterSet p;
  auto x = p.add("x", random_matrix(rng, 3, 5));
  Tensor target = random_matrix(rng, 3, 5, 0, 0.4);
  auto report = finite_diff_check(
      [&](Tape& t, const Binding& b) { return mse_mean(softmax_rows(b[x]), t.constant(target)); }, p);
  CHECK(report.max_relative_error < 1e-6);
}

TEST_CASE("l2_normalize_rows values, zero rows, idempotence") {
  Tape tape;
  auto y = l2_normalize_rows(tape.constant(Tensor::matrix({{3, 4}, {0, 0}})), 1e-12).value();
  CHECK(y(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(y(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(y(1, 0) == 0.0);
  CHECK(y(1, 1) == 0.0);

  std::mt19937_64 rng(3);
  Tensor x = random_matrix(rng, 6, 5);
  auto once = l2_normalize_rows(tape.constant(x));
  auto twice = l2_normalize_rows(once);
  CHECK(bevkd::testing::max_abs_diff(once.value(), twice.value()) < 1e-12);
  for (std::size_t i = 0; i < 6; ++i) {
    double ss = 0.0;
    for (double v : once.value().row(i)) ss += v * v;
    CHECK(std::abs(std::sqrt(ss) - 1.0) < 1e-10);
  }
}

TEST_CASE("l2_normalize_rows gradient") {
  std::mt19937_64 rng(8);
  ParameterSet p;
  auto x = p.add("x", random_matrix(rng, 5, 7));
  auto report = check_with_projection(p, [&](const Binding& b) { return l2_normalize_rows(b[x]); }, 9);
  CHECK(report.max_relative_error < 1e-5);
}

TEST_CASE("mse_mean values and errors") {
  Tape tape;
  auto a = tape.constant(Tensor::matrix({{1, 1}}));
  auto z = tape.constant(Tensor::matrix({{0, 0}}));
  CHECK(mse_mean(a, a).value().item() == 0.0);
  CHECK(mse_mean(a, z).value().item() == 1.0);
  CHECK_THROWS_AS(mse_mean(a, tape.constant(Tensor({1, 3}))), ValidationError);

  std::mt19937_64 rng(4);
  ParameterSet p;
  auto u = p.add("u", random_matrix(rng, 4, 3));
  auto v = p.add("v", random_matrix(rng, 4, 3));
  CHECK(finite_diff_check([&](Tape&, const Binding& b) { return mse_mean(b[u], b[v]); }, p)
            .max_relative_error < 1e-6);
}

TEST_CASE("backward of sum gives ones; non-scalar loss rejected") {
  Tape tape;
  Tensor p({2, 3}, 0.5);
  p.set_requires_grad(true);
  auto v = tape.leaf(p);
  tape.backward(sum(v));
  CHECK(tape.grad(v) == Tensor({2, 3}, 1.0));
  CHECK_THROWS_AS(tape.backward(v), ValidationError);
}

TEST_CASE("backward visits each recorded operation once") {
  Tape tape;
  Tensor p({2, 2}, 0.3);
  p.set_requires_grad(true);
  auto v = tape.leaf(p);
  auto y = add(relu(v), scale(v, 2.0));
  auto loss = sum(mul(y, y));
  tape.backward(loss);
  // relu, scale, add, mul, sum
  CHECK(tape.backward_visits() == 5);
  CHECK(tape.grad(v).same_shape(p));
}

TEST_CASE("normalized mse composite gradient") {
  std::mt19937_64 rng(14);
  ParameterSet p;
  auto x = p.add("x", random_matrix(rng, 4, 6));
  Tensor target = random_matrix(rng, 4, 6);
  auto report = finite_diff_check(
      [&](Tape& t, const Binding& b) { return mse_mean(l2_normalize_rows(b[x]), t.constant(target)); }, p);
  CHECK(report.max_relative_error < 1e-5);
}

TEST_CASE("finite_diff_check is exact for quadratics") {
  std::mt19937_64 rng(1);
  ParameterSet p;
  auto x = p.add("x", random_matrix(rng, 3, 3, -2, 2));
  auto report = finite_diff_check([&](Tape&, const Binding& b) { return sum(mul(b[x], b[x])); }, p);
  CHECK(report.max_relative_error < 1e-8);
  CHECK(report.worst_parameter == "x");
  CHECK(report.parameters.at(0).entries_checked == 9);
}

TEST_CASE("every primitive passes the finite-difference check on random inputs") {
  std::mt19937_64 rng(77);
  ParameterSet p;
  auto a = p.add("a", random_matrix(rng, 5, 4));
  auto b = p.add("b", random_matrix(rng, 5, 4));
  auto r = p.add("r", random_matrix(rng, 1, 4));
  std::vector<Index> seg = {0, 2, 0, 1, -1};
  std::vector<Index> key = {0, 1, 2, 3, 4};

  struct Case {
    const char* name;
    std::function<Var(const Binding&)> op;
  };
  std::vector<Case> cases = {
      {"transpose", [&](const Binding& x) { return transpose(x[a]); }},
      {"add", [&](const Binding& x) { return add(x[a], x[b]); }},
      {"sub", [&](const Binding& x) { return sub(x[a], x[b]); }},
      {"mul", [&](const Binding& x) { return mul(x[a], x[b]); }},
      {"scale", [&](const Binding& x) { return scale(x[a], -1.7); }},
      {"add_row", [&](const Binding& x) { return add_row(x[a], x[r]); }},
      {"mul_row", [&](const Binding& x) { return mul_row(x[a], x[r]); }},
      {"relu", [&](const Binding& x) { return relu(x[a]); }},
      {"log_softmax_rows", [&](const Binding& x) { return log_softmax_rows(x[a]); }},
      {"standardize_rows", [&](const Binding& x) { return standardize_rows(x[a]); }},
      {"mean", [&](const Binding& x) { return mean(x[a]); }},
      {"gather_rows", [&](const Binding& x) { return gather_rows(x[a], {4, -1, 0, 0, 2}); }},
      {"segment_sum", [&](const Binding& x) { return segment_sum(x[a], seg, 3); }},
      {"segment_max", [&](const Binding& x) { return segment_max(x[a], seg, 3, key); }},
      {"place_blocks", [&](const Binding& x) { return place_blocks(x[a], {1, 0, 2, 1, 0}, 3); }},
      {"pick_weighted_sum",
       [&](const Binding& x) { return pick_weighted_sum(x[a], {0, 3, 2, 1, 1}, {1.0, 0.5, 2.0, 0.0, 3.0}); }},
  };
  std::uint64_t seed = 100;
  for (auto& c : cases) {
    CAPTURE(c.name);
    auto report = check_with_projection(p, c.op, seed++);
    CHECK(report.max_relative_error < 1e-4);
  }
}

TEST_CASE("forward and backward are bit-deterministic") {
  std::mt19937_64 rng(2);
  Tensor x = random_matrix(rng, 6, 6);
  x.set_requires_grad(true);
  auto run = [&] {
    Tape tape;
    auto v = tape.leaf(x);
    auto loss = sum(mul(softmax_rows(matmul(v, transpose(v))), l2_normalize_rows(v)));
    tape.backward(loss);
    return std::make_pair(loss.value().item(), tape.grad(v));
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(r1.first == r2.first);
  CHECK(r1.second == r2.second);
}
