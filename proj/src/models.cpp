// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/models.hpp"

#include <cmath>

namespace bevkd {

PointEncoder polar_encoder(const GridSpec& spec) {
  PointEncoder e;
  e.width = kEncodedWidth;
  e.encode = [spec](const Point& p, std::span<double> out) {
    const double rho = std::hypot(p.x, p.y);
    const double theta = (p.x == 0.0 && p.y == 0.0) ? 0.0 : std::atan2(p.y, p.x);
    out[0] = rho / spec.rho_max;
    out[1] = std::cos(theta);
    out[2] = std::sin(theta);
    out[3] = 2.0 * (p.z - spec.z_min) / (spec.z_max - spec.z_min) - 1.0;
    out[4] = p.intensity;
  };
  return e;
}

ToyNet ToyNet::create(ParameterSet& params, const std::string& prefix, std::size_t in_width, std::size_t width,
                      std::size_t layers, std::size_t classes, std::mt19937_64& rng) {
  ToyNet net;
  std::size_t in = in_width;
  for (std::size_t l = 1; l <= layers; ++l) {
    net.blocks.push_back(Linear::create(params, prefix + ".layer" + std::to_string(l), in, width, rng));
    in = width;
  }
  net.classifier = Linear::create(params, prefix + ".classifier", width, classes, rng);
  return net;
}

NetOutput ToyNet::forward(const Binding& b, Var inputs) const {
  NetOutput out;
  Var h = inputs;
  for (const auto& block : blocks) {
    h = relu(block(b, h));
    out.features.push_back(h);
  }
  out.logits = classifier(b, h);
  return out;
}

DistillModules DistillModules::create(ParameterSet& params, const TrainConfig& cfg, std::mt19937_64& rng) {
  DistillModules d;
  if (cfg.ablation.vpd) {
    for (std::size_t l : cfg.vpd_layers) {
      VpdLayerModules m;
      m.layer = l;
      const std::string name = "distill.vpd" + std::to_string(l);
      m.compress = ZCompressParams::create(params, name + ".compress", cfg.ablation.compression_mode, cfg.grid.z_bins,
                                           cfg.c_v, cfg.c_b, rng);
      if (cfg.ablation.domain_transfer) m.transfer = DomainTransferParams::create(params, name + ".transfer", cfg.c_b, rng);
      if (cfg.ablation.cross_attention) {
        m.attention = CrossAttentionParams::create(params, name + ".attention", cfg.c_b, cfg.attention_dim, rng);
      }
      d.vpd.push_back(m);
    }
  }
  if (cfg.lwd.enabled) {
    d.embed = HeightEmbedding::create(params, "distill.lwd.height", cfg.grid.z_bins, cfg.c_v, rng);
    d.lwd_compress = TwoStageCompression::create(params, "distill.lwd.compress", cfg.grid.z_bins, cfg.c_v, cfg.c_b, rng);
  }
  return d;
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

TeacherModel TeacherModel::create(const TrainConfig& cfg, std::uint64_t seed) {
  TeacherModel m;
  auto rng = derive_rng(seed, kTeacherInit);
  m.net = ToyNet::create(m.params, "teacher", kEncodedWidth, cfg.c_v, cfg.layers, cfg.num_classes, rng);
  return m;
}

StudentModel StudentModel::create(const TrainConfig& cfg, std::uint64_t seed) {
  StudentModel m;
  auto rng = derive_rng(seed, kStudentInit);
  m.net = ToyNet::create(m.params, "student", kEncodedWidth, cfg.c_b, cfg.layers, cfg.num_classes, rng);
  auto drng = derive_rng(seed, kDistillInit);
  m.distill = DistillModules::create(m.params, cfg, drng);
  return m;
}

}  // namespace bevkd
