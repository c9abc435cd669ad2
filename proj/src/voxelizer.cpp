// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/voxelizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

constexpr double kPi = std::numbers::pi;

// floor((v − lo) / width) for v already known to lie in [lo, hi).
std::int32_t bin_of(double v, double lo, double hi, std::size_t bins) {
  const double width = (hi - lo) / static_cast<double>(bins);
  auto k = static_cast<std::int64_t>(std::floor((v - lo) / width));
  k = std::clamp<std::int64_t>(k, 0, static_cast<std::int64_t>(bins) - 1);
  return static_cast<std::int32_t>(k);
}

}  // namespace

void GridSpec::validate() const {
  if (rho_bins == 0 || theta_bins == 0 || z_bins == 0) throw ValidationError("grid: bin counts must be >= 1");
  if (!(rho_max > rho_min)) throw ValidationError("grid: rho_max must exceed rho_min");
  if (!(z_max > z_min)) throw ValidationError("grid: z_max must exceed z_min");
  if (!std::isfinite(rho_min) || !std::isfinite(rho_max) || !std::isfinite(z_min) || !std::isfinite(z_max)) {
    throw ValidationError("grid: ranges must be finite");
  }
}

bool GridSpec::same_lattice(const GridSpec& o) const {
  return rho_min == o.rho_min && rho_max == o.rho_max && rho_bins == o.rho_bins && theta_bins == o.theta_bins;
}

std::optional<VoxelCoord> cylindrical_bin(const Point& p, const GridSpec& spec) {
  const double rho = std::hypot(p.x, p.y);
  const double theta = (p.x == 0.0 && p.y == 0.0) ? 0.0 : std::atan2(p.y, p.x);
  if (!(rho >= spec.rho_min && rho < spec.rho_max)) return std::nullopt;
  if (!(theta >= -kPi && theta < kPi)) return std::nullopt;
  if (!(p.z >= spec.z_min && p.z < spec.z_max)) return std::nullopt;
  return VoxelCoord{bin_of(rho, spec.rho_min, spec.rho_max, spec.rho_bins),
                    bin_of(theta, -kPi, kPi, spec.theta_bins),
                    bin_of(p.z, spec.z_min, spec.z_max, spec.z_bins)};
}

PointEncoder identity_encoder() {
  return PointEncoder{4, [](const Point& p, std::span<double> out) {
                        out[0] = p.x;
                        out[1] = p.y;
                        out[2] = p.z;
                        out[3] = p.intensity;
                      }};
}

std::size_t BevGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), std::uint8_t{1}));
}

std::uint64_t HeightMap::total() const {
  std::uint64_t t = 0;
  for (auto v : values) t += v;
  return t;
}

std::uint32_t HeightMap::max() const {
  return values.empty() ? 0 : *std::max_element(values.begin(), values.end());
}

SparseVoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec, const PointEncoder& encoder) {
  spec.validate();
  SparseVoxelGrid grid;
  grid.spec = spec;
  grid.point_voxel.assign(cloud.size(), -1);

  std::vector<std::pair<VoxelCoord, std::size_t>> binned;
  binned.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto c = cylindrical_bin(cloud.points[i], spec)) {
      binned.emplace_back(*c, i);
    } else {
      ++grid.dropped;
    }
  }
  std::sort(binned.begin(), binned.end());

  const std::size_t width = encoder.width;
  std::vector<double> row(width);
  std::vector<double> acc;
  for (std::size_t k = 0; k < binned.size(); ++k) {
    if (grid.coords.empty() || grid.coords.back() != binned[k].first) {
      grid.coords.push_back(binned[k].first);
      grid.point_count.push_back(0);
      acc.resize(acc.size() + width, 0.0);
    }
    const std::size_t v = grid.coords.size() - 1;
    encoder.encode(cloud.points[binned[k].second], row);
    for (std::size_t j = 0; j < width; ++j) acc[v * width + j] += row[j];
    ++grid.point_count[v];
    grid.point_voxel[binned[k].second] = static_cast<Index>(v);
  }
  for (std::size_t v = 0; v < grid.coords.size(); ++v)
    for (std::size_t j = 0; j < width; ++j) acc[v * width + j] /= static_cast<double>(grid.point_count[v]);
  grid.feats = Tensor({grid.coords.size(), width}, std::move(acc));
  return grid;
}

BevGrid pillarize(const PointCloud& cloud, const GridSpec& spec, const PointEncoder& encoder) {
  spec.validate();
  BevGrid bev;
  bev.spec = spec;
  const std::size_t pillars = spec.num_pillars();
  const std::size_t width = encoder.width;
  bev.feats = Tensor({pillars, width});
  bev.occupied.assign(pillars, 0);
  bev.point_count.assign(pillars, 0);
  bev.point_pillar.assign(cloud.size(), -1);

  std::vector<double> row(width);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto c = cylindrical_bin(cloud.points[i], spec);
    if (!c) {
      ++bev.dropped;
      continue;
    }
    const std::size_t p = spec.pillar_index(static_cast<std::size_t>(c->rho), static_cast<std::size_t>(c->theta));
    encoder.encode(cloud.points[i], row);
    auto dst = bev.feats.row(p);
    for (std::size_t j = 0; j < width; ++j) dst[j] += row[j];
    ++bev.point_count[p];
    bev.occupied[p] = 1;
    bev.point_pillar[i] = static_cast<Index>(p);
  }
  for (std::size_t p = 0; p < pillars; ++p) {
    if (!bev.point_count[p]) continue;
    for (auto& v : bev.feats.row(p)) v /= static_cast<double>(bev.point_count[p]);
  }
  return bev;
}

HeightMap height_map(const SparseVoxelGrid& grid) {
  std::vector<std::uint8_t> all(grid.size(), 1);
  return height_map(grid, all);
}

HeightMap height_map(const SparseVoxelGrid& grid, std::span<const std::uint8_t> voxel_mask) {
  if (voxel_mask.size() != grid.size()) throw ValidationError("height_map: mask length differs from voxel count");
  HeightMap h;
  h.rho_bins = grid.spec.rho_bins;
  h.theta_bins = grid.spec.theta_bins;
  h.values.assign(grid.spec.num_pillars(), 0);
  // coords are unique, so each masked voxel is one distinct occupied z bin.
  for (std::size_t v = 0; v < grid.size(); ++v) {
    if (!voxel_mask[v]) continue;
    const auto& c = grid.coords[v];
    ++h.values[grid.spec.pillar_index(static_cast<std::size_t>(c.rho), static_cast<std::size_t>(c.theta))];
  }
  return h;
}

ColumnLayout column_layout(const SparseVoxelGrid& grid) {
  ColumnLayout layout;
  layout.z_bins = grid.spec.z_bins;
  layout.column_of_voxel.resize(grid.size());
  layout.z_of_voxel.resize(grid.size());
  for (std::size_t v = 0; v < grid.size(); ++v) {
    const auto& c = grid.coords[v];
    const std::size_t pillar = grid.spec.pillar_index(static_cast<std::size_t>(c.rho), static_cast<std::size_t>(c.theta));
    if (layout.pillar_of_column.empty() || layout.pillar_of_column.back() != pillar) {
      layout.pillar_of_column.push_back(pillar);
    }
    layout.column_of_voxel[v] = static_cast<Index>(layout.pillar_of_column.size() - 1);
    layout.z_of_voxel[v] = c.z;
  }
  return layout;
}

std::vector<ColumnMatch> match_columns(const SparseVoxelGrid& grid, const BevGrid& bev) {
  if (!grid.spec.same_lattice(bev.spec)) {
    throw ValidationError("match_columns: teacher and student grids use different (rho, theta) lattices");
  }
  const ColumnLayout layout = column_layout(grid);
  std::vector<ColumnMatch> out;
  out.reserve(layout.num_columns());
  for (std::size_t c = 0; c < layout.num_columns(); ++c) out.push_back({c, layout.pillar_of_column[c]});
  return out;
}

}  // namespace bevkd
