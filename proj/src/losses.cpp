// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

void check_targets(const Tensor& x, std::span<const Label> targets, Label ignore_id, const char* op) {
  require_matrix(x, op);
  if (targets.size() != x.rows()) {
    throw ValidationError(std::string(op) + ": " + std::to_string(targets.size()) + " targets for " +
                          std::to_string(x.rows()) + " rows");
  }
  for (Label t : targets) {
    if (t != ignore_id && t >= x.cols()) {
      throw ValidationError(std::string(op) + ": target " + std::to_string(t) + " outside " +
                            std::to_string(x.cols()) + " classes");
    }
  }
}

}  // namespace

Var weighted_ce(Var logits, std::span<const Label> targets, std::span<const double> class_weights, Label ignore_id) {
  const Tensor& x = logits.value();
  check_targets(x, targets, ignore_id, "weighted_ce");
  if (class_weights.size() != x.cols()) {
    throw ValidationError("weighted_ce: " + std::to_string(class_weights.size()) + " class weights for " +
                          std::to_string(x.cols()) + " classes");
  }
  std::vector<Index> column(targets.size(), 0);
  std::vector<double> weight(targets.size(), 0.0);
  double total = 0.0;
  for (std::size_t n = 0; n < targets.size(); ++n) {
    if (targets[n] == ignore_id) continue;
    column[n] = targets[n];
    weight[n] = class_weights[targets[n]];
    total += weight[n];
  }
  if (!(total > 0.0)) throw ValidationError("weighted_ce: no non-ignored point carries positive weight");
  return scale(pick_weighted_sum(log_softmax_rows(logits), std::move(column), std::move(weight)), -1.0 / total);
}

std::vector<double> lovasz_grad(std::span<const std::uint8_t> sorted_gt) {
  const std::size_t n = sorted_gt.size();
  std::vector<double> g(n);
  const double gts = std::accumulate(sorted_gt.begin(), sorted_gt.end(), 0.0);
  double cum_gt = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum_gt += sorted_gt[i];
    const double intersection = gts - cum_gt;
    const double uni = gts + static_cast<double>(i + 1) - cum_gt;
    const double jaccard = 1.0 - intersection / uni;
    g[i] = i == 0 ? jaccard : jaccard - prev;
    prev = jaccard;
  }
  return g;
}

Var lovasz_softmax(Var probs, std::span<const Label> targets, Label ignore_id) {
  const Tensor& p = probs.value();
  check_targets(p, targets, ignore_id, "lovasz_softmax");
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row(r)) s += v;
    if (std::abs(s - 1.0) > 1e-6) {
      throw ValidationError("lovasz_softmax: row " + std::to_string(r) + " sums to " + std::to_string(s) +
                            ", expected probabilities");
    }
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < targets.size(); ++r)
    if (targets[r] != ignore_id) rows.push_back(r);
  if (rows.empty()) throw ValidationError("lovasz_softmax: every point is ignored");

  // Per present class: (row, d loss_c / d p(row, c)) pairs, kept for backward.
  struct ClassTerm {
    std::size_t cls;
    std::vector<std::size_t> row;
    std::vector<double> dp;
  };
  std::vector<ClassTerm> terms;
  double loss = 0.0;
  const std::size_t n = rows.size();
  for (std::size_t c = 0; c < p.cols(); ++c) {
    std::vector<std::uint8_t> gt(n);
    std::vector<double> err(n);
    bool present = false;
    for (std::size_t i = 0; i < n; ++i) {
      gt[i] = targets[rows[i]] == c;
      present = present || gt[i];
      const double pc = p(rows[i], c);
      err[i] = gt[i] ? 1.0 - pc : pc;
    }
    if (!present) continue;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return err[a] > err[b]; });
    std::vector<std::uint8_t> sorted_gt(n);
    for (std::size_t k = 0; k < n; ++k) sorted_gt[k] = gt[order[k]];
    const auto g = lovasz_grad(sorted_gt);
    ClassTerm term{c, {}, {}};
    double lc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      lc += err[i] * g[k];
      term.row.push_back(rows[i]);
      term.dp.push_back(gt[i] ? -g[k] : g[k]);
    }
    loss += lc;
    terms.push_back(std::move(term));
  }
  const double inv = 1.0 / static_cast<double>(terms.size());
  return probs.tape().record(Tensor::scalar(loss * inv), {probs},
                             [terms = std::move(terms), inv](const Tensor&, const Tensor& g, std::span<Tensor* const> in) {
                               Tensor& gp = *in[0];
                               const double scale = g.item() * inv;
                               for (const auto& t : terms)
                                 for (std::size_t k = 0; k < t.row.size(); ++k) gp(t.row[k], t.cls) += scale * t.dp[k];
                             });
}

Var logit_kd(Var student_logits, const Tensor& teacher_logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("logit_kd: temperature must be > 0");
  require_same_shape(student_logits.value(), teacher_logits, "logit_kd");
  require_matrix(teacher_logits, "logit_kd");
  const std::size_t n = teacher_logits.rows();
  Tape& tape = student_logits.tape();
  if (n == 0) return tape.constant(Tensor::scalar(0.0));
  // Teacher side on a scratch tape: values only.
  Tensor pt, log_pt;
  {
    Tape scratch;
    Var t = scale(scratch.constant(teacher_logits), 1.0 / temperature);
    pt = softmax_rows(t).value();
    log_pt = log_softmax_rows(t).value();
  }
  double entropy_term = 0.0;
  for (std::size_t i = 0; i < pt.size(); ++i) entropy_term += pt[i] * log_pt[i];
  Var log_ps = log_softmax_rows(scale(student_logits, 1.0 / temperature));
  Var cross = sum(mul(tape.constant(pt), log_ps));
  Var kl_sum = sub(tape.constant(Tensor::scalar(entropy_term)), cross);
  return scale(kl_sum, temperature * temperature / static_cast<double>(n));
}

void LossWeights::validate() const {
  for (double b : {beta1, beta2, beta3}) {
    if (!std::isfinite(b) || b < 0.0) throw ValidationError("loss weights must be finite and nonnegative");
  }
}

Var total_loss(Var wce, Var lovasz, Var vpd, Var lwd, Var logit, const LossWeights& w) {
  return add(add(add(add(wce, lovasz), scale(vpd, w.beta1)), scale(lwd, w.beta2)), scale(logit, w.beta3));
}

double total_loss_value(double wce, double lovasz, double vpd, double lwd, double logit, const LossWeights& w) {
  return wce + lovasz + w.beta1 * vpd + w.beta2 * lwd + w.beta3 * logit;
}

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ValidationError("confusion matrix needs at least one class");
}

void ConfusionMatrix::accumulate(std::span<const Label> predictions, std::span<const Label> targets, Label ignore_id) {
  if (predictions.size() != targets.size()) {
    throw ValidationError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(targets.size()) + " targets");
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == ignore_id) continue;
    if (predictions[i] >= n_ || targets[i] >= n_) {
      throw ValidationError("confusion: label outside " + std::to_string(n_) + " classes");
    }
    ++at(targets[i], predictions[i]);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw ValidationError("confusion: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

MiouReport miou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValidationError("miou: confusion matrix is empty");
  const std::size_t c = cm.num_classes();
  MiouReport r;
  r.iou.assign(c, std::numeric_limits<double>::quiet_NaN());
  r.present.assign(c, 0);
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += cm.at(k, j);
      col += cm.at(j, k);
    }
    const std::uint64_t tp = cm.at(k, k);
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    r.present[k] = 1;
    r.iou[k] = static_cast<double>(tp) / static_cast<double>(uni);
    acc += r.iou[k];
    ++count;
  }
  r.mean = acc / static_cast<double>(count);
  return r;
}

void write_miou_csv(const std::filesystem::path& path, const MiouReport& report,
                    std::span<const std::string> class_names) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << "class,iou\n" << std::setprecision(17);
  for (std::size_t k = 0; k < report.iou.size(); ++k) {
    const std::string name = k < class_names.size() ? class_names[k] : "class_" + std::to_string(k);
    out << name << ',';
    if (report.present[k])
      out << report.iou[k];
    else
      out << "nan";
    out << '\n';
  }
  out << "mIoU," << report.mean << '\n';
  if (!out) throw RuntimeError("failed writing " + path.string());
}

}  // namespace bevkd
