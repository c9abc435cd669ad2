// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Label-weight distillation for the last layer before classification.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bevkd/sparse_compress.hpp"

namespace bevkd {

// One learned C_V-wide vector per z bin, added to every voxel in that bin.
struct HeightEmbedding {
  std::size_t z_bins = 0;
  std::size_t width = 0;
  ParameterSet::Id table = 0;

  static HeightEmbedding create(ParameterSet& params, const std::string& name, std::size_t z_bins, std::size_t width,
                                std::mt19937_64& rng);
};

Var height_embed(Var voxel_feats, const ColumnLayout& layout, const HeightEmbedding& p, const Binding& b);

// Stage 1 mixes channels per voxel with a z-specific C_V×C_V map and ReLU;
// stage 2 collapses each column to C_B with z_conv.
struct TwoStageCompression {
  std::size_t z_bins = 0;
  std::size_t width = 0;
  ParameterSet::Id stage1_weight = 0;  // (z_bins·width)×width
  ParameterSet::Id stage1_bias = 0;
  ZCompressParams stage2;

  static TwoStageCompression create(ParameterSet& params, const std::string& name, std::size_t z_bins,
                                    std::size_t in_width, std::size_t out_width, std::mt19937_64& rng);
};

Var compress_stage1(Var voxel_feats, const ColumnLayout& layout, const TwoStageCompression& p, const Binding& b);
Var compress_two_stage(Var voxel_feats, const ColumnLayout& layout, const TwoStageCompression& p, const Binding& b);

// k_rho × k_theta contiguous tiles over the (ρ, θ) lattice. When a bin count
// is not a multiple of the tile count, tile extents differ by at most one bin.
struct RegionPartition {
  std::size_t k_rho = 0;
  std::size_t k_theta = 0;
  std::size_t rho_bins = 0;
  std::size_t theta_bins = 0;
  std::vector<std::size_t> region_of_pillar;

  static RegionPartition make(const GridSpec& spec, std::size_t k_rho, std::size_t k_theta);
  std::size_t num_regions() const { return k_rho * k_theta; }
};

struct RegionWeights {
  std::vector<double> mass;         // H summed per region
  std::vector<double> weight;       // W_i = H_i / ΣH
  std::vector<double> probability;  // P_i = W_i / ΣW
};

RegionWeights region_weights(const HeightMap& h, const RegionPartition& part);

std::size_t positive_regions(std::span<const double> probability);

// M distinct regions drawn proportionally to P without replacement.
std::vector<std::size_t> sample_regions(std::span<const double> probability, std::size_t m, std::mt19937_64& rng);

// Normalized row distance over matched columns whose pillar lies in a
// selected region, divided by the number of such columns.
Var lwd_loss(Var student_pillars, Var teacher_columns, std::span<const std::size_t> selected,
             std::span<const ColumnMatch> matches, const RegionPartition& part);

}  // namespace bevkd
