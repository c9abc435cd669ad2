// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bevkd/config.hpp"
#include "bevkd/pointcloud.hpp"

namespace bevkd {

struct Scene {
  std::string name;
  PointCloud cloud;
  LabelSet labels;  // train ids (ignore_id for unlabeled points)
};

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
};

// Synthetic scenes are regenerated from data.scene_seed; file data reads
// <root>/{train,val}/*.bin with matching .label files and remaps them.
Dataset load_dataset(const TrainConfig& cfg);

// The remap declared by the config, or identity when none is given.
LabelRemap config_remap(const TrainConfig& cfg);

std::vector<Scene> load_split(const std::filesystem::path& dir, const LabelRemap& remap);

// Raw SemanticKITTI-style ids used for the synthetic classes on disk.
std::vector<Label> synthetic_raw_ids();

// Writes the synthetic dataset to disk: train/ and val/ scans with raw
// labels (instance id in the upper 16 bits), remap.json, and data.json (a
// config fragment pointing at this directory).
void write_synthetic_dataset(const TrainConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace bevkd
