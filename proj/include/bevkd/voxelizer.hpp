// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bevkd/ops.hpp"
#include "bevkd/pointcloud.hpp"
#include "bevkd/tensor.hpp"

namespace bevkd {

/// Cylindrical lattice: ρ ∈ [rho_min, rho_max), θ ∈ [−π, π), z ∈ [z_min, z_max),
/// all half-open with floor indexing. The BEV grid is the same lattice with z collapsed.
struct GridSpec {
  double rho_min = 0.0;
  double rho_max = 16.0;
  std::size_t rho_bins = 16;
  std::size_t theta_bins = 16;
  double z_min = -2.0;
  double z_max = 2.0;
  std::size_t z_bins = 8;

  void validate() const;
  std::size_t num_pillars() const { return rho_bins * theta_bins; }
  std::size_t pillar_index(std::size_t rho, std::size_t theta) const { return rho * theta_bins + theta; }
  bool same_lattice(const GridSpec& other) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

struct VoxelCoord {
  std::int32_t rho = 0;
  std::int32_t theta = 0;
  std::int32_t z = 0;

  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

// Bin of a point, or nullopt when any coordinate falls outside its range.
// atan2(0, 0) is taken as θ = 0.
std::optional<VoxelCoord> cylindrical_bin(const Point& p, const GridSpec& spec);

/// Maps one point to a fixed-width feature row.
struct PointEncoder {
  std::size_t width = 4;
  std::function<void(const Point&, std::span<double>)> encode;
};

// (x, y, z, i) unchanged.
PointEncoder identity_encoder();

struct SparseVoxelGrid {
  GridSpec spec;
  std::vector<VoxelCoord> coords;  // strictly increasing
  Tensor feats;                    // coords.size() × width
  std::vector<std::size_t> point_count;
  std::vector<Index> point_voxel;  // per input point; −1 if dropped
  std::size_t dropped = 0;

  std::size_t size() const { return coords.size(); }
};

struct BevGrid {
  GridSpec spec;
  Tensor feats;                    // num_pillars × width, zero where unoccupied
  std::vector<std::uint8_t> occupied;
  std::vector<std::size_t> point_count;
  std::vector<Index> point_pillar;  // flat pillar index per input point; −1 if dropped
  std::size_t dropped = 0;

  std::size_t occupied_count() const;
};

struct HeightMap {
  std::size_t rho_bins = 0;
  std::size_t theta_bins = 0;
  std::vector<std::uint32_t> values;

  std::uint32_t at(std::size_t rho, std::size_t theta) const { return values[rho * theta_bins + theta]; }
  std::uint64_t total() const;
  std::uint32_t max() const;
};

// Per-voxel feature = mean of encoder outputs over member points.
SparseVoxelGrid voxelize(const PointCloud& cloud, const GridSpec& spec, const PointEncoder& encoder = identity_encoder());

// Per-pillar feature = mean of encoder outputs over member points (z ignored).
BevGrid pillarize(const PointCloud& cloud, const GridSpec& spec, const PointEncoder& encoder = identity_encoder());

// H[ρ, θ] = number of occupied z bins in that column. The masked overload
// only counts voxels with voxel_mask[v] != 0.
HeightMap height_map(const SparseVoxelGrid& grid);
HeightMap height_map(const SparseVoxelGrid& grid, std::span<const std::uint8_t> voxel_mask);

/// Nonempty teacher columns in (ρ, θ) order.
struct ColumnLayout {
  std::vector<Index> column_of_voxel;         // per voxel
  std::vector<Index> z_of_voxel;              // per voxel
  std::vector<std::size_t> pillar_of_column;  // flat pillar index per column
  std::size_t z_bins = 0;

  std::size_t num_columns() const { return pillar_of_column.size(); }
};

ColumnLayout column_layout(const SparseVoxelGrid& grid);

struct ColumnMatch {
  std::size_t column = 0;
  std::size_t pillar = 0;

  friend bool operator==(const ColumnMatch&, const ColumnMatch&) = default;
};

// Every nonempty teacher column paired with the pillar at the same lattice
// position, whether or not the student occupies it.
std::vector<ColumnMatch> match_columns(const SparseVoxelGrid& grid, const BevGrid& bev);

}  // namespace bevkd
