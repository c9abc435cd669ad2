// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>

#include "bevkd/nn.hpp"
#include "bevkd/voxelizer.hpp"

namespace bevkd {

enum class CompressionMode { ScatterMax, ZConv };

CompressionMode parse_compression_mode(const std::string& name);
const char* to_string(CompressionMode mode);

/// Collapses each nonempty teacher column into one BEV feature row.
///
/// ZConv is a learned z-kernel spanning the whole column: one C_V×C_B matrix
/// per z bin, summed over the occupied bins only, plus a bias and ReLU.
/// ScatterMax has no parameters and needs C_V == C_B.
struct ZCompressParams {
  CompressionMode mode = CompressionMode::ZConv;
  std::size_t z_bins = 0;
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  // weight is (z_bins·in_width)×out_width; block k holds W_z[k].
  ParameterSet::Id weight = 0;
  ParameterSet::Id bias = 0;

  static ZCompressParams create(ParameterSet& params, const std::string& name, CompressionMode mode,
                                std::size_t z_bins, std::size_t in_width, std::size_t out_width,
                                std::mt19937_64& rng);
};

// Σ_{occupied z} feats[v]·W_z[z] + b per column, before the ReLU. Rows follow
// the layout's column order (identical to match_columns order).
Var compress_z_conv_preactivation(Var voxel_feats, const ColumnLayout& layout, const ZCompressParams& params,
                                  const Binding& b);
Var compress_z_conv(Var voxel_feats, const ColumnLayout& layout, const ZCompressParams& params, const Binding& b);

// Elementwise max over the column's voxels; ties resolve to the lowest z.
Var compress_scatter_max(Var voxel_feats, const ColumnLayout& layout, const ZCompressParams& params);

// Dispatches on params.mode.
Var compress_columns(Var voxel_feats, const ColumnLayout& layout, const ZCompressParams& params, const Binding& b);

}  // namespace bevkd
