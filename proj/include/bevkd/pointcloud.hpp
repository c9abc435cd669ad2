// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bevkd {

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

using Label = std::uint32_t;

struct LabelSet {
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
};

/// Raw semantic id → train id table. Values equal to `ignore_id` mark points
/// excluded from losses and metrics.
struct LabelRemap {
  std::map<Label, Label> mapping;
  std::uint32_t num_classes = 0;
  Label ignore_id = 255;

  static LabelRemap identity(std::uint32_t num_classes, Label ignore_id);
  // {"<raw id>": train_id, ..., "num_classes": C, "ignore_id": id}
  static LabelRemap from_json(const std::string& text);
  static LabelRemap load(const std::filesystem::path& path);
  std::string to_json() const;
};

// SemanticKITTI layout: float32 (x, y, z, i) per point, little-endian.
PointCloud read_point_cloud_bin(const std::filesystem::path& path);
PointCloud decode_point_cloud(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_point_cloud(const PointCloud& cloud);
void write_point_cloud_bin(const std::filesystem::path& path, const PointCloud& cloud);

// uint32 per point, little-endian; the semantic id is the low 16 bits.
LabelSet read_labels(const std::filesystem::path& path);
LabelSet decode_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_labels(const LabelSet& labels);
void write_labels(const std::filesystem::path& path, const LabelSet& labels);

LabelSet remap_labels(const LabelSet& raw, const LabelRemap& remap);

/// One synthetic class: points uniform in an annulus sector and a height band.
struct ClassBand {
  std::string name;
  Label label = 0;
  std::size_t count = 0;
  double rho_min = 0.0;
  double rho_max = 1.0;
  double z_min = 0.0;
  double z_max = 0.0;
  // Angular extent of the sector; its start angle is drawn per scene.
  double theta_span = 6.283185307179586;
  double intensity_mean = 0.5;
  double intensity_sd = 0.05;
};

struct SceneSpec {
  std::vector<ClassBand> classes;
};

// Four geometrically separable classes: two flat ground classes and two tall
// structures spanning many z bins of the default grid.
SceneSpec default_scene_spec();

std::pair<PointCloud, LabelSet> synth_scene(std::uint64_t seed, const SceneSpec& spec);

// w_c = total / count_c over non-ignored points; zero for absent classes.
std::vector<double> compute_class_weights(std::span<const LabelSet> splits, std::uint32_t num_classes,
                                          Label ignore_id);

}  // namespace bevkd
