// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

std::uint64_t scene_seed(std::uint64_t base, std::uint32_t split, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32), split,
                    static_cast<std::uint32_t>(index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string scan_name(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

std::vector<Scene> synthetic_split(const TrainConfig& cfg, std::uint32_t split, std::size_t count) {
  const SceneSpec spec = default_scene_spec();
  std::vector<Scene> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto [cloud, labels] = synth_scene(scene_seed(cfg.data.scene_seed, split, i), spec);
    out.push_back({scan_name(i), std::move(cloud), std::move(labels)});
  }
  return out;
}

}  // namespace

LabelRemap config_remap(const TrainConfig& cfg) {
  if (cfg.data.remap.empty()) {
    return LabelRemap::identity(cfg.num_classes, cfg.ignore_id);
  }
  std::filesystem::path p(cfg.data.remap);
  if (p.is_relative() && !cfg.data.root.empty()) p = std::filesystem::path(cfg.data.root) / p;
  LabelRemap r = LabelRemap::load(p);
  if (r.num_classes != cfg.num_classes) {
    throw ValidationError("remap declares " + std::to_string(r.num_classes) + " classes, config has " +
                          std::to_string(cfg.num_classes));
  }
  if (r.ignore_id != cfg.ignore_id) throw ValidationError("remap ignore_id differs from config ignore_id");
  return r;
}

std::vector<Scene> load_split(const std::filesystem::path& dir, const LabelRemap& remap) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("data split directory missing: " + dir.string());
  std::vector<std::filesystem::path> scans;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".bin") scans.push_back(e.path());
  }
  std::sort(scans.begin(), scans.end());
  std::vector<Scene> out;
  for (const auto& scan : scans) {
    Scene s;
    s.name = scan.stem().string();
    s.cloud = read_point_cloud_bin(scan);
    auto label_path = scan;
    label_path.replace_extension(".label");
    s.labels = remap_labels(read_labels(label_path), remap);
    if (s.labels.size() != s.cloud.size()) {
      throw ValidationError(label_path.string() + ": " + std::to_string(s.labels.size()) + " labels for " +
                            std::to_string(s.cloud.size()) + " points");
    }
    out.push_back(std::move(s));
  }
  return out;
}

Dataset load_dataset(const TrainConfig& cfg) {
  Dataset d;
  if (cfg.data.source == "synthetic") {
    d.train = synthetic_split(cfg, 0, cfg.data.train_scenes);
    d.val = synthetic_split(cfg, 1, cfg.data.val_scenes);
  } else {
    const LabelRemap remap = config_remap(cfg);
    const std::filesystem::path root(cfg.data.root);
    d.train = load_split(root / "train", remap);
    d.val = load_split(root / "val", remap);
  }
  if (d.train.empty() || d.val.empty()) throw ValidationError("dataset needs at least one train and one val scan");
  return d;
}

std::vector<Label> synthetic_raw_ids() { return {40, 72, 80, 50}; }

void write_synthetic_dataset(const TrainConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const auto raw = synthetic_raw_ids();
  if (cfg.num_classes != raw.size()) {
    throw ValidationError("synthetic data has " + std::to_string(raw.size()) + " classes, config has " +
                          std::to_string(cfg.num_classes));
  }
  const std::pair<const char*, std::vector<Scene>> splits[] = {
      {"train", synthetic_split(cfg, 0, cfg.data.train_scenes)},
      {"val", synthetic_split(cfg, 1, cfg.data.val_scenes)},
  };
  try {
    for (const auto& [name, scenes] : splits) {
      fs::create_directories(out_dir / name);
      for (const auto& s : scenes) {
        LabelSet onto_disk;
        for (std::size_t i = 0; i < s.labels.size(); ++i) {
          // Upper half carries an instance id that readers must discard.
          const Label instance = static_cast<Label>((i % 7) + 1) << 16;
          onto_disk.labels.push_back(raw[s.labels.labels[i]] | instance);
        }
        write_point_cloud_bin(out_dir / name / (s.name + ".bin"), s.cloud);
        write_labels(out_dir / name / (s.name + ".label"), onto_disk);
      }
    }
    LabelRemap remap;
    remap.num_classes = cfg.num_classes;
    remap.ignore_id = cfg.ignore_id;
    remap.mapping[0] = cfg.ignore_id;
    for (std::size_t c = 0; c < raw.size(); ++c) remap.mapping[raw[c]] = static_cast<Label>(c);
    std::ofstream(out_dir / "remap.json") << remap.to_json() << '\n';
    TrainConfig file_cfg = cfg;
    file_cfg.data.source = "files";
    file_cfg.data.root = ".";
    file_cfg.data.remap = "remap.json";
    std::ofstream(out_dir / "data.json") << config_to_json(file_cfg).dump(2) << '\n';
  } catch (const fs::filesystem_error& e) {
    throw RuntimeError(std::string("synth-data: ") + e.what());
  }
}

}  // namespace bevkd
