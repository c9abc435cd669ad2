// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/sparse_compress.hpp"

#include <cmath>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

void check_input(Var feats, const ColumnLayout& layout, std::size_t width, const char* op) {
  const Tensor& f = feats.value();
  require_matrix(f, op);
  if (f.rows() != layout.column_of_voxel.size()) {
    throw ValidationError(std::string(op) + ": " + std::to_string(f.rows()) + " feature rows for " +
                          std::to_string(layout.column_of_voxel.size()) + " voxels");
  }
  if (f.cols() != width) {
    throw ValidationError(std::string(op) + ": feature width " + std::to_string(f.cols()) + " but kernel expects " +
                          std::to_string(width));
  }
}

}  // namespace

CompressionMode parse_compression_mode(const std::string& name) {
  if (name == "z_conv") return CompressionMode::ZConv;
  if (name == "scatter_max") return CompressionMode::ScatterMax;
  throw ValidationError("unknown compression mode '" + name + "' (expected z_conv or scatter_max)");
}

const char* to_string(CompressionMode mode) { return mode == CompressionMode::ZConv ? "z_conv" : "scatter_max"; }

ZCompressParams ZCompressParams::create(ParameterSet& params, const std::string& name, CompressionMode mode,
                                        std::size_t z_bins, std::size_t in_width, std::size_t out_width,
                                        std::mt19937_64& rng) {
  ZCompressParams p;
  p.mode = mode;
  p.z_bins = z_bins;
  p.in_width = in_width;
  p.out_width = out_width;
  if (mode == CompressionMode::ScatterMax) {
    if (in_width != out_width) {
      throw ValidationError("scatter_max compression needs equal widths, got " + std::to_string(in_width) + " -> " +
                            std::to_string(out_width));
    }
    return p;
  }
  // A column typically holds a few voxels; scale so the summed output stays O(1).
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_width * 2));
  p.weight = params.add(name + ".weight", normal_tensor(rng, z_bins * in_width, out_width, stddev));
  p.bias = params.add(name + ".bias", Tensor({1, out_width}));
  return p;
}

Var compress_z_conv_preactivation(Var voxel_feats, const ColumnLayout& layout, const ZCompressParams& params,
                                  const Binding& b) {
  if (params.mode != CompressionMode::ZConv) throw ValidationError("compress_z_conv: params are not z_conv");
  if (params.z_bins != layout.z_bins) {
    throw ValidationError("compress_z_conv: kernel has " + std::to_string(params.z_bins) + " z bins, grid has " +
                          std::to_string(layout.z_bins));
  }
  check_input(voxel_feats, layout, params.in_width, "compress_z_conv");
  // Spread each voxel row into its z block, sum blocks per column, then one
  // matmul applies W_z[z] to every occupied bin at once.
  Var placed = place_blocks(voxel_feats, layout.z_of_voxel, params.z_bins);
  Var per_column = segment_sum(placed, layout.column_of_voxel, layout.num_columns());
  return add_row(matmul(per_column, b[params.weight]), b[params.bias]);
}

Var compress_z_conv(Var voxel_feats, const ColumnLayout& layout, const ZCompressParams& params, const Binding& b) {
  return relu(compress_z_conv_preactivation(voxel_feats, layout, params, b));
}

Var compress_scatter_max(Var voxel_feats, const ColumnLayout& layout, const ZCompressParams& params) {
  if (params.in_width != params.out_width) throw ValidationError("compress_scatter_max: widths differ");
  check_input(voxel_feats, layout, params.in_width, "compress_scatter_max");
  return segment_max(voxel_feats, layout.column_of_voxel, layout.num_columns(), layout.z_of_voxel);
}

Var compress_columns(Var voxel_feats, const ColumnLayout& layout, const ZCompressParams& params, const Binding& b) {
  return params.mode == CompressionMode::ZConv ? compress_z_conv(voxel_feats, layout, params, b)
                                               : compress_scatter_max(voxel_feats, layout, params);
}

}  // namespace bevkd
