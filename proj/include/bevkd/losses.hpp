// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Segmentation and distillation objectives plus mIoU evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bevkd/ops.hpp"
#include "bevkd/pointcloud.hpp"

namespace bevkd {

// −Σ w_y log softmax(x)_y / Σ w_y over rows whose target is not `ignore_id`.
Var weighted_ce(Var logits, std::span<const Label> targets, std::span<const double> class_weights, Label ignore_id);

// Lovász-softmax averaged over the classes present in the non-ignored targets.
// Rows of `probs` must sum to 1 within 1e-6.
Var lovasz_softmax(Var probs, std::span<const Label> targets, Label ignore_id);

// Lovász extension gradient for a ground-truth indicator already sorted by
// descending error.
std::vector<double> lovasz_grad(std::span<const std::uint8_t> sorted_gt);

// T²·mean_n KL(softmax(t_n/T) ‖ softmax(s_n/T)); the teacher is a constant.
Var logit_kd(Var student_logits, const Tensor& teacher_logits, double temperature);

struct LossWeights {
  double beta1 = 2.0;  // voxel-to-pillar term
  double beta2 = 2.0;  // label-weight term
  double beta3 = 1.0;  // logit term

  void validate() const;
};

Var total_loss(Var wce, Var lovasz, Var vpd, Var lwd, Var logit, const LossWeights& w);
double total_loss_value(double wce, double lovasz, double vpd, double lwd, double logit, const LossWeights& w);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  // Rows with target == ignore_id are skipped.
  void accumulate(std::span<const Label> predictions, std::span<const Label> targets, Label ignore_id);
  void merge(const ConfusionMatrix& other);

  std::size_t num_classes() const { return n_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * n_ + pred]; }
  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * n_ + pred]; }
  std::uint64_t total() const;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

struct MiouReport {
  std::vector<double> iou;      // NaN for classes absent from both gt and prediction
  std::vector<std::uint8_t> present;
  double mean = 0.0;
};

MiouReport miou(const ConfusionMatrix& cm);

// "class,iou" rows (absent classes written as "nan") followed by "mIoU,<mean>".
void write_miou_csv(const std::filesystem::path& path, const MiouReport& report,
                    std::span<const std::string> class_names);

}  // namespace bevkd
