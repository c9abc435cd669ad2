// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration: one strict JSON document.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "bevkd/losses.hpp"
#include "bevkd/sparse_compress.hpp"
#include "bevkd/voxelizer.hpp"

namespace bevkd {

struct LwdConfig {
  bool enabled = true;
  std::size_t k_rho = 4;
  std::size_t k_theta = 6;
  std::size_t m = 2;
};

struct AblationFlags {
  bool logit_kd = true;
  bool vpd = true;
  CompressionMode compression_mode = CompressionMode::ZConv;
  bool domain_transfer = true;
  bool cross_attention = true;
};

// The teacher is pretrained with its own schedule; it is frozen afterwards.
struct TeacherTrainConfig {
  std::size_t epochs = 8;
  double learning_rate = 0.01;
  std::string optimizer = "adam";
};

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" or "files"
  // synthetic
  std::size_t train_scenes = 64;
  std::size_t val_scenes = 16;
  std::uint64_t scene_seed = 7;
  // files: <root>/train and <root>/val hold NNNNNN.bin / NNNNNN.label pairs
  std::string root;
  std::string remap;  // label remap JSON; relative paths resolve against root
};

struct TrainConfig {
  GridSpec grid{0.0, 16.0, 16, 24, -2.0, 2.0, 8};
  std::uint32_t num_classes = 4;
  Label ignore_id = 255;
  std::vector<std::string> class_names{"road", "terrain", "pole", "building"};
  std::size_t c_v = 16;
  std::size_t c_b = 16;
  std::size_t layers = 3;
  std::vector<std::size_t> vpd_layers{2, 3};  // 1-based
  std::size_t attention_dim = 16;
  LwdConfig lwd;
  LossWeights loss_weights;
  double temperature = 2.0;
  std::string optimizer = "sgd";
  double learning_rate = 0.001;
  std::size_t batch_size = 2;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  TeacherTrainConfig teacher;
  DataConfig data;
  AblationFlags ablation;

  // Throws ValidationError naming the offending key.
  void validate() const;
  bool any_distillation() const { return ablation.logit_kd || ablation.vpd || lwd.enabled; }
};

// Missing keys keep their defaults; unknown keys are errors.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const TrainConfig& cfg);

}  // namespace bevkd
