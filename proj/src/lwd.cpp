// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/lwd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bevkd/error.hpp"
#include "bevkd/vpd.hpp"

namespace bevkd {

HeightEmbedding HeightEmbedding::create(ParameterSet& params, const std::string& name, std::size_t z_bins,
                                        std::size_t width, std::mt19937_64& rng) {
  if (z_bins == 0 || width == 0) throw ValidationError("height embedding needs positive z bins and width");
  HeightEmbedding p;
  p.z_bins = z_bins;
  p.width = width;
  p.table = params.add(name + ".table", normal_tensor(rng, z_bins, width, 0.1));
  return p;
}

Var height_embed(Var voxel_feats, const ColumnLayout& layout, const HeightEmbedding& p, const Binding& b) {
  const Tensor& f = voxel_feats.value();
  require_matrix(f, "height_embed");
  if (f.cols() != p.width) {
    throw ValidationError("height_embed: feature width " + std::to_string(f.cols()) + " but table width " +
                          std::to_string(p.width));
  }
  if (layout.z_bins != p.z_bins) {
    throw ValidationError("height_embed: table has " + std::to_string(p.z_bins) + " rows, grid has " +
                          std::to_string(layout.z_bins) + " z bins");
  }
  if (f.rows() != layout.z_of_voxel.size()) throw ValidationError("height_embed: feature rows differ from voxel count");
  return add(voxel_feats, gather_rows(b[p.table], layout.z_of_voxel));
}

TwoStageCompression TwoStageCompression::create(ParameterSet& params, const std::string& name, std::size_t z_bins,
                                                std::size_t in_width, std::size_t out_width, std::mt19937_64& rng) {
  TwoStageCompression p;
  p.z_bins = z_bins;
  p.width = in_width;
  p.stage1_weight = params.add(name + ".stage1.weight",
                               normal_tensor(rng, z_bins * in_width, in_width, std::sqrt(2.0 / in_width)));
  p.stage1_bias = params.add(name + ".stage1.bias", Tensor({1, in_width}));
  p.stage2 = ZCompressParams::create(params, name + ".stage2", CompressionMode::ZConv, z_bins, in_width, out_width, rng);
  return p;
}

Var compress_stage1(Var voxel_feats, const ColumnLayout& layout, const TwoStageCompression& p, const Binding& b) {
  const Tensor& f = voxel_feats.value();
  require_matrix(f, "compress_two_stage");
  if (f.cols() != p.width) {
    throw ValidationError("compress_two_stage: feature width " + std::to_string(f.cols()) + " but stage 1 expects " +
                          std::to_string(p.width));
  }
  if (layout.z_bins != p.z_bins) throw ValidationError("compress_two_stage: z bin count differs from the grid");
  Var placed = place_blocks(voxel_feats, layout.z_of_voxel, p.z_bins);
  return relu(add_row(matmul(placed, b[p.stage1_weight]), b[p.stage1_bias]));
}

Var compress_two_stage(Var voxel_feats, const ColumnLayout& layout, const TwoStageCompression& p, const Binding& b) {
  return compress_z_conv(compress_stage1(voxel_feats, layout, p, b), layout, p.stage2, b);
}

RegionPartition RegionPartition::make(const GridSpec& spec, std::size_t k_rho, std::size_t k_theta) {
  if (k_rho == 0 || k_theta == 0) throw ValidationError("region partition needs at least one tile per axis");
  if (k_rho > spec.rho_bins || k_theta > spec.theta_bins) {
    throw ValidationError("region partition " + std::to_string(k_rho) + "x" + std::to_string(k_theta) +
                          " is finer than the " + std::to_string(spec.rho_bins) + "x" +
                          std::to_string(spec.theta_bins) + " lattice");
  }
  RegionPartition part;
  part.k_rho = k_rho;
  part.k_theta = k_theta;
  part.rho_bins = spec.rho_bins;
  part.theta_bins = spec.theta_bins;
  part.region_of_pillar.resize(spec.num_pillars());
  for (std::size_t r = 0; r < spec.rho_bins; ++r)
    for (std::size_t t = 0; t < spec.theta_bins; ++t) {
      const std::size_t tr = r * k_rho / spec.rho_bins;
      const std::size_t tt = t * k_theta / spec.theta_bins;
      part.region_of_pillar[spec.pillar_index(r, t)] = tr * k_theta + tt;
    }
  return part;
}

RegionWeights region_weights(const HeightMap& h, const RegionPartition& part) {
  if (h.rho_bins != part.rho_bins || h.theta_bins != part.theta_bins) {
    throw ValidationError("region_weights: height map and partition lattices differ");
  }
  RegionWeights w;
  w.mass.assign(part.num_regions(), 0.0);
  for (std::size_t i = 0; i < h.values.size(); ++i) w.mass[part.region_of_pillar[i]] += h.values[i];
  const double total = std::accumulate(w.mass.begin(), w.mass.end(), 0.0);
  if (total <= 0.0) throw ValidationError("region_weights: height map is all zero");
  w.weight.resize(w.mass.size());
  for (std::size_t i = 0; i < w.mass.size(); ++i) w.weight[i] = w.mass[i] / total;
  // ΣW is 1 analytically; dividing by its rounded sum would only add noise.
  w.probability = w.weight;
  return w;
}

std::size_t positive_regions(std::span<const double> probability) {
  return static_cast<std::size_t>(std::count_if(probability.begin(), probability.end(), [](double p) { return p > 0.0; }));
}

std::vector<std::size_t> sample_regions(std::span<const double> probability, std::size_t m, std::mt19937_64& rng) {
  for (double p : probability) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("sample_regions: probabilities must be finite and >= 0");
  }
  const std::size_t available = positive_regions(probability);
  if (m == 0 || m > available) {
    throw ValidationError("sample_regions: cannot draw " + std::to_string(m) + " regions from " +
                          std::to_string(available) + " with nonzero height");
  }
  std::vector<double> remaining(probability.begin(), probability.end());
  std::vector<std::size_t> picked;
  picked.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    // discrete_distribution normalizes, which is the renormalization step.
    std::discrete_distribution<std::size_t> draw(remaining.begin(), remaining.end());
    const std::size_t id = draw(rng);
    picked.push_back(id);
    remaining[id] = 0.0;
  }
  return picked;
}

Var lwd_loss(Var student_pillars, Var teacher_columns, std::span<const std::size_t> selected,
             std::span<const ColumnMatch> matches, const RegionPartition& part) {
  std::vector<char> chosen(part.num_regions(), 0);
  for (std::size_t r : selected) {
    if (r >= chosen.size()) throw ValidationError("lwd_loss: region id " + std::to_string(r) + " out of range");
    chosen[r] = 1;
  }
  std::vector<Index> pillars, cols;
  for (const auto& m : matches) {
    if (m.pillar >= part.region_of_pillar.size()) throw ValidationError("lwd_loss: pillar index out of range");
    if (!chosen[part.region_of_pillar[m.pillar]]) continue;
    pillars.push_back(static_cast<Index>(m.pillar));
    cols.push_back(static_cast<Index>(m.column));
  }
  if (pillars.empty()) throw ValidationError("lwd_loss: the selected regions contain no matched columns");
  return normalized_row_distance(gather_rows(student_pillars, std::move(pillars)),
                                 gather_rows(teacher_columns, std::move(cols)), "lwd_loss");
}

}  // namespace bevkd
