// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "bevkd/error.hpp"
#include "bevkd/gradcheck.hpp"
#include "bevkd/losses.hpp"
#include "test_util.hpp"

using namespace bevkd;
using bevkd::testing::one_minus_iou;
using bevkd::testing::random_matrix;

namespace {

constexpr Label kIgnore = 255;

double wce_of(const Tensor& logits, const std::vector<Label>& y, const std::vector<double>& w) {
  Tape t;
  return weighted_ce(t.constant(logits), y, w, kIgnore).value().item();
}

double lovasz_of(const Tensor& p, const std::vector<Label>& y) {
  Tape t;
  return lovasz_softmax(t.constant(p), y, kIgnore).value().item();
}

}  // namespace

TEST_CASE("weighted cross entropy") {
  std::vector<double> uniform{1, 1, 1};
  CHECK(wce_of(Tensor::matrix({{80, 0, 0}, {0, 0, 80}}), {0, 2}, uniform) < 1e-30);
  CHECK(wce_of(Tensor::matrix({{0.3, 0.3, 0.3}, {0.3, 0.3, 0.3}}), {1, 2}, uniform) ==
        doctest::Approx(std::log(3.0)).epsilon(1e-14));

  // Equal per-point CE values: the weighted mean returns that value.
  Tensor l = Tensor::matrix({{2.0, 0.5}, {0.5, 2.0}});
  const double single = wce_of(Tensor::matrix({{2.0, 0.5}}), {0}, {1, 3});
  CHECK(wce_of(l, {0, 1}, {1, 3}) == doctest::Approx(single).epsilon(1e-14));

  // Ignored rows do not count.
  CHECK(wce_of(Tensor::matrix({{2.0, 0.5}, {9, -9}}), {0, kIgnore}, {1, 3}) == doctest::Approx(single));
  CHECK_THROWS_AS(wce_of(Tensor::matrix({{1, 2}}), {kIgnore}, {1, 1}), ValidationError);
  CHECK_THROWS_AS(wce_of(Tensor::matrix({{1, 2}}), {2}, {1, 1}), ValidationError);

  std::mt19937_64 rng(1);
  Tensor x = random_matrix(rng, 6, 4, -3, 3);
  std::vector<Label> y{0, 1, 2, 3, 1, kIgnore};
  std::vector<double> w{0.5, 2.0, 1.0, 3.0};
  Tensor shifted = x;
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 4; ++c) shifted(r, c) += 17.0 * (r + 1);
  CHECK(std::abs(wce_of(x, y, w) - wce_of(shifted, y, w)) < 1e-10);
}

TEST_CASE("lovasz softmax simple cases") {
  CHECK(lovasz_of(Tensor::matrix({{1, 0, 0}, {0, 0, 1}}), {0, 2}) == 0.0);
  CHECK(lovasz_of(Tensor::matrix({{0.3, 0.7}}), {0}) == doctest::Approx(0.7));
  CHECK_THROWS_AS(lovasz_of(Tensor::matrix({{0.3, 0.6}}), {0}), ValidationError);
  CHECK_THROWS_AS(lovasz_of(Tensor::matrix({{0.3, 0.7}}), {kIgnore}), ValidationError);
}

TEST_CASE("lovasz softmax equals 1 - IoU on every hard instance up to 6 points and 3 classes") {
  std::size_t instances = 0;
  for (std::size_t classes = 2; classes <= 3; ++classes)
    for (std::size_t n = 1; n <= 6; ++n) {
      std::size_t combos = 1;
      for (std::size_t i = 0; i < n; ++i) combos *= classes;
      for (std::size_t yc = 0; yc < combos; ++yc) {
        std::vector<Label> y(n);
        for (std::size_t i = 0, k = yc; i < n; ++i, k /= classes) y[i] = static_cast<Label>(k % classes);
        for (std::size_t pc = 0; pc < combos; ++pc) {
          std::vector<Label> pred(n);
          Tensor p({n, classes});
          for (std::size_t i = 0, k = pc; i < n; ++i, k /= classes) {
            pred[i] = static_cast<Label>(k % classes);
            p(i, pred[i]) = 1.0;
          }
          const double got = lovasz_of(p, y);
          const double want = one_minus_iou(y, pred, classes);
          if (std::abs(got - want) > 1e-12) {
            FAIL("mismatch at n=" << n << " classes=" << classes << ": " << got << " vs " << want);
          }
          if (pred == y) CHECK(got == 0.0);
          ++instances;
        }
      }
    }
  CHECK(instances > 500000);
}

TEST_CASE("lovasz softmax gradient") {
  std::mt19937_64 rng(2);
  ParameterSet params;
  auto logits = params.add("logits", random_matrix(rng, 7, 3, -2, 2));
  std::vector<Label> y{0, 1, 2, 2, 0, kIgnore, 1};
  auto report = finite_diff_check(
      [&](Tape&, const Binding& b) { return lovasz_softmax(softmax_rows(b[logits]), y, kIgnore); }, params);
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("logit distillation") {
  Tape t;
  Tensor teacher = Tensor::matrix({{1.0, -0.5, 2.0}, {0.1, 0.2, 0.3}});
  CHECK(std::abs(logit_kd(t.constant(teacher), teacher, 2.0).value().item()) < 1e-15);

  Tensor tl = Tensor::matrix({{std::log(0.8), std::log(0.2)}});
  Tensor sl = Tensor::matrix({{0.0, 0.0}});
  const double want = 0.8 * std::log(0.8 / 0.5) + 0.2 * std::log(0.2 / 0.5);
  CHECK(logit_kd(t.constant(sl), tl, 1.0).value().item() == doctest::Approx(want).epsilon(1e-14));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    Tape tp;
    CHECK(logit_kd(tp.constant(random_matrix(rng, 4, 5, -3, 3)), random_matrix(rng, 4, 5, -3, 3), 2.0)
              .value()
              .item() >= 0.0);
  }
  CHECK_THROWS_AS(logit_kd(t.constant(sl), tl, 0.0), ValidationError);
  CHECK_THROWS_AS(logit_kd(t.constant(teacher), tl, 1.0), ValidationError);

  ParameterSet params;
  auto s = params.add("student", random_matrix(rng, 5, 4));
  Tensor tt = random_matrix(rng, 5, 4);
  auto report = finite_diff_check([&](Tape&, const Binding& b) { return logit_kd(b[s], tt, 2.0); }, params);
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("total loss") {
  Tape t;
  auto one = t.constant(Tensor::scalar(1.0));
  CHECK(total_loss(one, one, one, one, one, LossWeights{}).value().item() == 7.0);
  CHECK(total_loss(one, one, one, one, one, LossWeights{0, 0, 0}).value().item() == 2.0);
  CHECK(total_loss_value(1, 1, 1, 1, 1, LossWeights{}) == 7.0);
  CHECK_THROWS_AS((LossWeights{-1, 0, 0}.validate()), ValidationError);

  // Gradient equals the β-weighted sum of component gradients.
  std::mt19937_64 rng(4);
  Tensor x = random_matrix(rng, 3, 3);
  auto grad_of = [&](auto build) {
    Tape tp;
    Tensor v = x;
    v.set_requires_grad(true);
    auto leaf = tp.leaf(v);
    tp.backward(build(tp, leaf));
    return tp.grad(leaf);
  };
  auto c1 = [](Tape&, Var v) { return sum(mul(v, v)); };
  auto c2 = [](Tape&, Var v) { return sum(relu(v)); };
  auto c3 = [](Tape&, Var v) { return mean(v); };
  Tensor total = grad_of([&](Tape& tp, Var v) {
    auto z = tp.constant(Tensor::scalar(0.0));
    return total_loss(c1(tp, v), z, c2(tp, v), c3(tp, v), c1(tp, v), LossWeights{2, 2, 1});
  });
  Tensor g1 = grad_of(c1), g2 = grad_of(c2), g3 = grad_of(c3);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(total[i] == doctest::Approx(2 * g1[i] + 2 * g2[i] + 2 * g3[i]));
}

TEST_CASE("confusion matrix and mIoU") {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 50;
  cm.at(0, 1) = 50;
  cm.at(1, 1) = 100;
  auto r = miou(cm);
  CHECK(r.iou[0] == 0.5);
  CHECK(std::abs(r.iou[1] - 100.0 / 150.0) < 1e-15);
  CHECK(std::abs(r.mean - 7.0 / 12.0) < 1e-12);

  ConfusionMatrix perfect(3);
  std::vector<Label> y{0, 1, 2, 2, kIgnore};
  perfect.accumulate(y, y, kIgnore);
  CHECK(perfect.total() == 4);
  CHECK(miou(perfect).mean == 1.0);

  ConfusionMatrix wrong(2);
  wrong.accumulate(std::vector<Label>{1, 0}, std::vector<Label>{0, 1}, kIgnore);
  CHECK(miou(wrong).mean == 0.0);

  // Absent classes are left out of the mean.
  ConfusionMatrix sparse(4);
  sparse.accumulate(std::vector<Label>{0, 0}, std::vector<Label>{0, 1}, kIgnore);
  auto rs = miou(sparse);
  CHECK(rs.present == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(rs.mean == 0.25);

  // Single-class predictor: that class's IoU averaged with zeros.
  ConfusionMatrix single(3);
  single.accumulate(std::vector<Label>{0, 0, 0, 0}, std::vector<Label>{0, 1, 2, 0}, kIgnore);
  CHECK(miou(single).mean == doctest::Approx(0.5 / 3.0));

  CHECK_THROWS_AS(miou(ConfusionMatrix(2)), ValidationError);
  CHECK_THROWS_AS(wrong.accumulate(std::vector<Label>{2}, std::vector<Label>{0}, kIgnore), ValidationError);
}

TEST_CASE("mIoU is invariant to a consistent class permutation") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<Label> lab(0, 3);
  std::vector<Label> perm{2, 0, 3, 1};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Label> y(50), p(50), yp(50), pp(50);
    for (std::size_t i = 0; i < 50; ++i) {
      y[i] = lab(rng);
      p[i] = lab(rng);
      yp[i] = perm[y[i]];
      pp[i] = perm[p[i]];
    }
    ConfusionMatrix a(4), b(4);
    a.accumulate(p, y, kIgnore);
    b.accumulate(pp, yp, kIgnore);
    CHECK(miou(a).mean == doctest::Approx(miou(b).mean).epsilon(1e-15));
  }
}

TEST_CASE("mIoU csv report") {
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 50;
  cm.at(0, 1) = 50;
  cm.at(1, 1) = 100;
  auto path = std::filesystem::temp_directory_path() / "bevkd_miou_report.csv";
  std::vector<std::string> names{"road", "pole", "building"};
  write_miou_csv(path, miou(cm), names);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "class,iou\nroad,0.5\npole,0.66666666666666663\nbuilding,nan\nmIoU,0.58333333333333326\n");
  std::filesystem::remove(path);
}
