// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include <json.hpp>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot create '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeError("write failed for '" + path.string() + "'");
}

std::uint32_t load_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32_le(std::uint32_t v, std::vector<std::uint8_t>& out) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

LabelRemap LabelRemap::identity(std::uint32_t num_classes, Label ignore_id) {
  LabelRemap r;
  r.num_classes = num_classes;
  r.ignore_id = ignore_id;
  for (Label c = 0; c < num_classes; ++c) r.mapping[c] = c;
  r.mapping[ignore_id] = ignore_id;
  return r;
}

LabelRemap LabelRemap::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("remap config: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("remap config must be a JSON object");
  if (!doc.contains("num_classes") || !doc.contains("ignore_id")) {
    throw ValidationError("remap config needs \"num_classes\" and \"ignore_id\"");
  }
  LabelRemap r;
  try {
    r.num_classes = doc.at("num_classes").get<std::uint32_t>();
    r.ignore_id = doc.at("ignore_id").get<Label>();
    for (const auto& [key, value] : doc.items()) {
      if (key == "num_classes" || key == "ignore_id") continue;
      std::size_t used = 0;
      unsigned long raw = 0;
      try {
        raw = std::stoul(key, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != key.size() || key.empty()) throw ValidationError("remap config: unknown key '" + key + "'");
      const Label train = value.get<Label>();
      if (train >= r.num_classes && train != r.ignore_id) {
        throw ValidationError("remap config: train id " + std::to_string(train) + " for raw id " + key +
                              " is outside [0, num_classes)");
      }
      r.mapping[static_cast<Label>(raw)] = train;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("remap config: ") + e.what());
  }
  if (r.num_classes == 0) throw ValidationError("remap config: num_classes must be positive");
  return r;
}

LabelRemap LabelRemap::load(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return from_json(std::string(bytes.begin(), bytes.end()));
}

std::string LabelRemap::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [raw, train] : mapping) doc[std::to_string(raw)] = train;
  doc["num_classes"] = num_classes;
  doc["ignore_id"] = ignore_id;
  return doc.dump(2);
}

PointCloud decode_point_cloud(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 16 != 0) {
    throw ValidationError("point cloud: byte length " + std::to_string(bytes.size()) +
                          " is not a multiple of 16 (truncated or misaligned file)");
  }
  PointCloud cloud;
  cloud.points.resize(bytes.size() / 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const std::uint8_t* p = bytes.data() + 16 * i;
    auto f = [&](int k) { return static_cast<double>(std::bit_cast<float>(load_u32_le(p + 4 * k))); };
    cloud.points[i] = Point{f(0), f(1), f(2), f(3)};
  }
  return cloud;
}

std::vector<std::uint8_t> encode_point_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(cloud.size() * 16);
  for (const auto& p : cloud.points) {
    for (double v : {p.x, p.y, p.z, p.intensity}) store_u32_le(std::bit_cast<std::uint32_t>(static_cast<float>(v)), out);
  }
  return out;
}

PointCloud read_point_cloud_bin(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return decode_point_cloud(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_point_cloud_bin(const std::filesystem::path& path, const PointCloud& cloud) {
  write_file(path, encode_point_cloud(cloud));
}

LabelSet decode_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    throw ValidationError("labels: byte length " + std::to_string(bytes.size()) +
                          " is not a multiple of 4 (truncated file)");
  }
  LabelSet set;
  set.labels.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < set.labels.size(); ++i) set.labels[i] = load_u32_le(bytes.data() + 4 * i) & 0xFFFFu;
  return set;
}

std::vector<std::uint8_t> encode_labels(const LabelSet& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(labels.size() * 4);
  for (Label l : labels.labels) store_u32_le(l, out);
  return out;
}

LabelSet read_labels(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return decode_labels(bytes);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_labels(const std::filesystem::path& path, const LabelSet& labels) { write_file(path, encode_labels(labels)); }

LabelSet remap_labels(const LabelSet& raw, const LabelRemap& remap) {
  LabelSet out;
  out.labels.reserve(raw.size());
  for (Label l : raw.labels) {
    auto it = remap.mapping.find(l);
    if (it == remap.mapping.end()) throw ValidationError("remap: raw label id " + std::to_string(l) + " is not mapped");
    out.labels.push_back(it->second);
  }
  return out;
}

SceneSpec default_scene_spec() {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  SceneSpec spec;
  spec.classes = {
      {"road", 0, 220, 1.5, 7.0, -1.95, -1.6, two_pi, 0.15, 0.05},
      {"terrain", 1, 160, 7.0, 11.0, -1.95, -1.6, two_pi, 0.45, 0.05},
      {"pole", 2, 90, 11.0, 13.0, -1.9, 1.9, 2.2, 0.65, 0.05},
      {"building", 3, 160, 13.0, 15.5, -1.2, 1.9, 3.6, 0.85, 0.05},
  };
  return spec;
}

std::pair<PointCloud, LabelSet> synth_scene(std::uint64_t seed, const SceneSpec& spec) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud cloud;
  LabelSet labels;
  constexpr double pi = std::numbers::pi;
  for (const auto& band : spec.classes) {
    if (band.rho_max < band.rho_min || band.z_max < band.z_min || band.theta_span < 0.0) {
      throw ValidationError("synth_scene: class '" + band.name + "' has an inverted range");
    }
    const double theta_start = -pi + 2.0 * pi * unit(rng);
    std::normal_distribution<double> intensity(band.intensity_mean, band.intensity_sd);
    for (std::size_t k = 0; k < band.count; ++k) {
      const double rho = band.rho_min + (band.rho_max - band.rho_min) * unit(rng);
      double theta = theta_start + band.theta_span * unit(rng);
      while (theta >= pi) theta -= 2.0 * pi;
      const double z = band.z_min + (band.z_max - band.z_min) * unit(rng);
      const double i = std::clamp(intensity(rng), 0.0, 1.0);
      cloud.points.push_back(Point{rho * std::cos(theta), rho * std::sin(theta), z, i});
      labels.labels.push_back(band.label);
    }
  }
  return {std::move(cloud), std::move(labels)};
}

std::vector<double> compute_class_weights(std::span<const LabelSet> splits, std::uint32_t num_classes,
                                          Label ignore_id) {
  std::vector<std::size_t> counts(num_classes, 0);
  std::size_t total = 0;
  for (const auto& set : splits) {
    for (Label l : set.labels) {
      if (l == ignore_id) continue;
      if (l >= num_classes) throw ValidationError("class weights: label " + std::to_string(l) + " >= num_classes");
      ++counts[l];
      ++total;
    }
  }
  if (total == 0) throw ValidationError("class weights: every point is ignored");
  std::vector<double> w(num_classes, 0.0);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (counts[c]) w[c] = static_cast<double>(total) / static_cast<double>(counts[c]);
  }
  return w;
}

}  // namespace bevkd
