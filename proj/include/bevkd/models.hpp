// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Toy teacher (per voxel) and student (per pillar) networks plus the
// distillation modules trained alongside the student.

#pragma once

#include <optional>
#include <random>
#include <vector>

#include "bevkd/config.hpp"
#include "bevkd/lwd.hpp"
#include "bevkd/nn.hpp"
#include "bevkd/vpd.hpp"

namespace bevkd {

// (ρ/ρ_max, cos θ, sin θ, z scaled to [−1, 1], intensity).
PointEncoder polar_encoder(const GridSpec& spec);

struct NetOutput {
  std::vector<Var> features;  // one per layer, post-ReLU
  Var logits;
};

// `layers` Linear+ReLU blocks followed by a linear classifier, applied row-wise.
struct ToyNet {
  std::vector<Linear> blocks;
  Linear classifier;

  static ToyNet create(ParameterSet& params, const std::string& prefix, std::size_t in_width, std::size_t width,
                       std::size_t layers, std::size_t classes, std::mt19937_64& rng);
  NetOutput forward(const Binding& b, Var inputs) const;
};

struct VpdLayerModules {
  std::size_t layer = 0;  // 1-based
  ZCompressParams compress;
  std::optional<DomainTransferParams> transfer;
  std::optional<CrossAttentionParams> attention;
};

struct DistillModules {
  std::vector<VpdLayerModules> vpd;
  std::optional<HeightEmbedding> embed;
  std::optional<TwoStageCompression> lwd_compress;

  // Only the modules enabled by the config get parameters.
  static DistillModules create(ParameterSet& params, const TrainConfig& cfg, std::mt19937_64& rng);
};

constexpr std::size_t kEncodedWidth = 5;

// Parameter layouts for the two checkpoint kinds. Initialization streams are
// derived from `seed` so the student's own weights do not depend on which
// distillation modules exist.
struct TeacherModel {
  ParameterSet params;
  ToyNet net;
  static TeacherModel create(const TrainConfig& cfg, std::uint64_t seed);
};

struct StudentModel {
  ParameterSet params;  // student weights first, then distillation modules
  ToyNet net;
  DistillModules distill;
  static StudentModel create(const TrainConfig& cfg, std::uint64_t seed);
};

// Independent generator for a named purpose.
std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream);

enum RngStream : std::uint64_t {
  kTeacherInit = 1,
  kStudentInit = 2,
  kDistillInit = 3,
  kShuffle = 4,
  kRegionSampling = 5,
  kGradcheck = 6,
};

}  // namespace bevkd
