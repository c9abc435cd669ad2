// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "bevkd/tape.hpp"

// Differentiable primitives. All reductions run in a fixed left-to-right
// order so forward and backward passes are bit-reproducible.
namespace bevkd {

using Index = std::int64_t;

Var matmul(Var a, Var b);
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

// Broadcast a 1×n (or length-n) row over every row of an m×n matrix.
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);

Var relu(Var a);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);

// Each row divided by max(‖row‖₂, eps).
Var l2_normalize_rows(Var x, double eps = 1e-12);

// Each row shifted to zero mean and divided by sqrt(var + eps).
Var standardize_rows(Var x, double eps = 1e-5);

Var mse_mean(Var a, Var b);
Var sum(Var a);
Var mean(Var a);

// out[r] = x[index[r]], or the zero row where index[r] < 0.
Var gather_rows(Var x, std::vector<Index> index);

// out[s] = Σ x[r] over rows with segment[r] == s. Rows with segment < 0 are dropped.
Var segment_sum(Var x, std::vector<Index> segment, std::size_t num_segments);

// Elementwise max over rows of each segment. Ties go to the row with the
// smallest tie_key (then the earliest row). Empty segments yield zeros.
Var segment_max(Var x, std::vector<Index> segment, std::size_t num_segments,
                std::vector<Index> tie_key);

// Row r of x (width c) is written at columns [block[r]*c, block[r]*c + c) of a
// zero row of width num_blocks*c.
Var place_blocks(Var x, std::vector<Index> block, std::size_t num_blocks);

// Σ_n weight[n] · x[n, column[n]] → scalar.
Var pick_weighted_sum(Var x, std::vector<Index> column, std::vector<double> weight);

}  // namespace bevkd
