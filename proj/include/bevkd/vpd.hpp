// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Voxel-to-pillar distillation for middle layers.

#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "bevkd/nn.hpp"
#include "bevkd/voxelizer.hpp"

namespace bevkd {

// Linear → row standardization with learned affine → ReLU → Linear, all C_B wide.
struct DomainTransferParams {
  std::size_t width = 0;
  Linear first;
  ParameterSet::Id gamma = 0;
  ParameterSet::Id beta = 0;
  Linear second;

  // First map He-initialized; the final map starts as the identity.
  static DomainTransferParams create(ParameterSet& params, const std::string& name, std::size_t width,
                                     std::mt19937_64& rng);
  // Overwrites every affine with identity weights and zero bias.
  void set_identity(ParameterSet& params) const;
};

Var domain_transfer(Var x, const DomainTransferParams& p, const Binding& b);

struct CrossAttentionParams {
  std::size_t width = 0;
  std::size_t d_k = 0;
  ParameterSet::Id w_q = 0;
  ParameterSet::Id w_k = 0;
  ParameterSet::Id w_v = 0;

  // W_Q, W_K ~ N(0, 1/width); W_V starts as the identity.
  static CrossAttentionParams create(ParameterSet& params, const std::string& name, std::size_t width,
                                     std::size_t d_k, std::mt19937_64& rng);
};

// f_B' = softmax(Q Kᵀ / √d_k) V with Q = f_V W_Q, K = f_B W_K, V = f_V W_V.
Var cross_attention(Var f_v, Var f_b, const CrossAttentionParams& p, const Binding& b);

struct TransferredPair {
  Var f_v;  // teacher rows after the optional domain transfer
  Var f_b;  // student rows of the matched pillars
};

// Gathers matched teacher columns and student pillars into aligned N×C_B
// blocks. `transfer` may be null to skip the MLP.
TransferredPair flatten_and_transfer(Var teacher_columns, Var student_pillars, std::span<const ColumnMatch> matches,
                                     const DomainTransferParams* transfer, const Binding& b);

// Mean over rows of ‖a/‖a‖ − b/‖b‖‖². A zero-row layer yields 0.
Var normalized_row_distance(Var a, Var b, const char* what);
Var vpd_loss(Var f_b_prime, Var f_v);
// Mean of the per-layer losses; throws on an empty layer list.
Var vpd_total(std::span<const Var> per_layer);

// Mean row cosine similarity; 0 for empty inputs.
double mean_row_cosine(const Tensor& a, const Tensor& b);

}  // namespace bevkd
