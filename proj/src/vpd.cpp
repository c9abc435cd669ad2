// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/vpd.hpp"

#include <cmath>

#include "bevkd/error.hpp"

namespace bevkd {

DomainTransferParams DomainTransferParams::create(ParameterSet& params, const std::string& name, std::size_t width,
                                                  std::mt19937_64& rng) {
  if (width == 0) throw ValidationError("domain transfer width must be positive");
  DomainTransferParams p;
  p.width = width;
  p.first = Linear::create(params, name + ".fc1", width, width, rng);
  p.gamma = params.add(name + ".norm.gamma", Tensor({1, width}, 1.0));
  p.beta = params.add(name + ".norm.beta", Tensor({1, width}));
  p.second = Linear::create_identity(params, name + ".fc2", width, width);
  return p;
}

void DomainTransferParams::set_identity(ParameterSet& params) const {
  params.value(first.weight) = identity_tensor(width, width);
  params.value(first.bias) = Tensor({1, width});
  params.value(gamma) = Tensor({1, width}, 1.0);
  params.value(beta) = Tensor({1, width});
  params.value(second.weight) = identity_tensor(width, width);
  params.value(second.bias) = Tensor({1, width});
}

Var domain_transfer(Var x, const DomainTransferParams& p, const Binding& b) {
  require_matrix(x.value(), "domain_transfer");
  if (x.value().cols() != p.width) {
    throw ValidationError("domain_transfer: input width " + std::to_string(x.value().cols()) + " but MLP expects " +
                          std::to_string(p.width));
  }
  Var h = p.first(b, x);
  h = add_row(mul_row(standardize_rows(h), b[p.gamma]), b[p.beta]);
  return p.second(b, relu(h));
}

CrossAttentionParams CrossAttentionParams::create(ParameterSet& params, const std::string& name, std::size_t width,
                                                  std::size_t d_k, std::mt19937_64& rng) {
  if (width == 0 || d_k == 0) throw ValidationError("cross attention needs positive width and d_k");
  CrossAttentionParams p;
  p.width = width;
  p.d_k = d_k;
  const double sd = 1.0 / std::sqrt(static_cast<double>(width));
  p.w_q = params.add(name + ".w_q", normal_tensor(rng, width, d_k, sd));
  p.w_k = params.add(name + ".w_k", normal_tensor(rng, width, d_k, sd));
  p.w_v = params.add(name + ".w_v", identity_tensor(width, width));
  return p;
}

Var cross_attention(Var f_v, Var f_b, const CrossAttentionParams& p, const Binding& b) {
  const Tensor& tv = f_v.value();
  const Tensor& tb = f_b.value();
  require_matrix(tv, "cross_attention");
  require_matrix(tb, "cross_attention");
  if (tv.rows() != tb.rows()) {
    throw ValidationError("cross_attention: " + std::to_string(tv.rows()) + " teacher rows vs " +
                          std::to_string(tb.rows()) + " student rows");
  }
  if (tv.cols() != p.width || tb.cols() != p.width) {
    throw ValidationError("cross_attention: feature widths " + shape_string(tv.shape()) + ", " +
                          shape_string(tb.shape()) + " do not match attention width " + std::to_string(p.width));
  }
  Var q = matmul(f_v, b[p.w_q]);
  Var k = matmul(f_b, b[p.w_k]);
  Var v = matmul(f_v, b[p.w_v]);
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(p.d_k)));
  return matmul(softmax_rows(scores), v);
}

TransferredPair flatten_and_transfer(Var teacher_columns, Var student_pillars, std::span<const ColumnMatch> matches,
                                     const DomainTransferParams* transfer, const Binding& b) {
  require_matrix(teacher_columns.value(), "flatten_and_transfer");
  require_matrix(student_pillars.value(), "flatten_and_transfer");
  std::vector<Index> cols, pillars;
  cols.reserve(matches.size());
  pillars.reserve(matches.size());
  for (const auto& m : matches) {
    if (m.column >= teacher_columns.value().rows() || m.pillar >= student_pillars.value().rows()) {
      throw ValidationError("flatten_and_transfer: match (" + std::to_string(m.column) + ", " +
                            std::to_string(m.pillar) + ") outside " + shape_string(teacher_columns.value().shape()) +
                            " / " + shape_string(student_pillars.value().shape()));
    }
    cols.push_back(static_cast<Index>(m.column));
    pillars.push_back(static_cast<Index>(m.pillar));
  }
  Var f_v = gather_rows(teacher_columns, std::move(cols));
  Var f_b = gather_rows(student_pillars, std::move(pillars));
  if (transfer != nullptr && !matches.empty()) f_v = domain_transfer(f_v, *transfer, b);
  return {f_v, f_b};
}

Var normalized_row_distance(Var a, Var b, const char* what) {
  require_same_shape(a.value(), b.value(), what);
  require_matrix(a.value(), what);
  const std::size_t n = a.value().rows();
  if (n == 0) return a.tape().constant(Tensor::scalar(0.0));
  Var d = sub(l2_normalize_rows(a), l2_normalize_rows(b));
  return scale(sum(mul(d, d)), 1.0 / static_cast<double>(n));
}

Var vpd_loss(Var f_b_prime, Var f_v) { return normalized_row_distance(f_b_prime, f_v, "vpd_loss"); }

Var vpd_total(std::span<const Var> per_layer) {
  if (per_layer.empty()) throw ValidationError("vpd_total: the distilled layer set is empty");
  Var acc = per_layer[0];
  for (std::size_t i = 1; i < per_layer.size(); ++i) acc = add(acc, per_layer[i]);
  return scale(acc, 1.0 / static_cast<double>(per_layer.size()));
}

double mean_row_cosine(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mean_row_cosine");
  if (a.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      ab += a(r, c) * b(r, c);
      aa += a(r, c) * a(r, c);
      bb += b(r, c) * b(r, c);
    }
    const double denom = std::sqrt(aa) * std::sqrt(bb);
    total += denom > 0.0 ? ab / denom : 0.0;
  }
  return total / static_cast<double>(a.rows());
}

}  // namespace bevkd
