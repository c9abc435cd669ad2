// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

using nlohmann::json;

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config: '" + where() + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: '" + name(key) + "' has the wrong type");
    }
  }

  void unsigned_int(const char* key, std::size_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ValidationError("config: '" + name(key) + "' must be a nonnegative integer");
    out = v.get<std::size_t>();
  }

  void unsigned64(const char* key, std::uint64_t& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ValidationError("config: '" + name(key) + "' must be a nonnegative integer");
    out = v.get<std::uint64_t>();
  }

  Reader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, name(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ValidationError("config: unknown key '" + name(k) + "'");
    }
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError("config: " + message);
}

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void TrainConfig::validate() const {
  try {
    grid.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config: grid: ") + e.what());
  }
  require(num_classes >= 2, "num_classes must be at least 2");
  require(ignore_id >= num_classes, "ignore_id must not collide with a class id");
  require(class_names.empty() || class_names.size() == num_classes, "class_names must list num_classes names");
  require(c_v > 0 && c_b > 0, "c_v and c_b must be positive");
  require(layers >= 1, "layers must be at least 1");
  require(attention_dim >= 1, "attention_dim must be at least 1");
  if (ablation.vpd) require(!vpd_layers.empty(), "vpd_layers is empty while ablation.vpd is on");
  std::set<std::size_t> unique;
  for (std::size_t l : vpd_layers) {
    require(l >= 1 && l <= layers, "vpd_layers entry " + std::to_string(l) + " outside 1.." + std::to_string(layers));
    require(unique.insert(l).second, "vpd_layers repeats layer " + std::to_string(l));
  }
  if (ablation.compression_mode == CompressionMode::ScatterMax) {
    require(c_v == c_b, "scatter_max compression needs c_v == c_b");
  }
  require(lwd.k_rho >= 1 && lwd.k_rho <= grid.rho_bins, "lwd.k_rho must be in 1..grid.rho_bins");
  require(lwd.k_theta >= 1 && lwd.k_theta <= grid.theta_bins, "lwd.k_theta must be in 1..grid.theta_bins");
  require(lwd.m >= 1 && lwd.m <= lwd.k_rho * lwd.k_theta, "lwd.m must be in 1..k_rho*k_theta");
  try {
    loss_weights.validate();
  } catch (const ValidationError&) {
    throw ValidationError("config: loss_weights must be finite and nonnegative");
  }
  require(positive_finite(temperature), "temperature must be positive");
  require(optimizer == "sgd" || optimizer == "adam", "optimizer must be 'sgd' or 'adam'");
  require(teacher.optimizer == "sgd" || teacher.optimizer == "adam", "teacher.optimizer must be 'sgd' or 'adam'");
  require(positive_finite(learning_rate), "learning_rate must be positive");
  require(positive_finite(teacher.learning_rate), "teacher.learning_rate must be positive");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(data.source == "synthetic" || data.source == "files", "data.source must be 'synthetic' or 'files'");
  if (data.source == "synthetic") {
    require(data.train_scenes >= 1 && data.val_scenes >= 1, "data needs at least one train and one val scene");
  } else {
    require(!data.root.empty(), "data.root is required for file data");
  }
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  Reader r(j, "");
  {
    Reader g = r.child("grid");
    g.get("rho_min", c.grid.rho_min);
    g.get("rho_max", c.grid.rho_max);
    g.unsigned_int("rho_bins", c.grid.rho_bins);
    g.unsigned_int("theta_bins", c.grid.theta_bins);
    g.get("z_min", c.grid.z_min);
    g.get("z_max", c.grid.z_max);
    g.unsigned_int("z_bins", c.grid.z_bins);
    g.finish();
  }
  std::size_t classes = c.num_classes, ignore = c.ignore_id;
  r.unsigned_int("num_classes", classes);
  r.unsigned_int("ignore_id", ignore);
  require(classes <= 0xFFFF && ignore <= 0xFFFF, "num_classes and ignore_id must fit in 16 bits");
  c.num_classes = static_cast<std::uint32_t>(classes);
  c.ignore_id = static_cast<Label>(ignore);
  if (j.contains("num_classes") && !j.contains("class_names")) c.class_names.clear();
  r.get("class_names", c.class_names);
  r.unsigned_int("c_v", c.c_v);
  r.unsigned_int("c_b", c.c_b);
  r.unsigned_int("layers", c.layers);
  r.get("vpd_layers", c.vpd_layers);
  r.unsigned_int("attention_dim", c.attention_dim);
  {
    Reader l = r.child("lwd");
    l.get("enabled", c.lwd.enabled);
    l.unsigned_int("k_rho", c.lwd.k_rho);
    l.unsigned_int("k_theta", c.lwd.k_theta);
    l.unsigned_int("m", c.lwd.m);
    l.finish();
  }
  {
    Reader w = r.child("loss_weights");
    w.get("beta1", c.loss_weights.beta1);
    w.get("beta2", c.loss_weights.beta2);
    w.get("beta3", c.loss_weights.beta3);
    w.finish();
  }
  r.get("temperature", c.temperature);
  r.get("optimizer", c.optimizer);
  r.get("learning_rate", c.learning_rate);
  r.unsigned_int("batch_size", c.batch_size);
  r.unsigned_int("epochs", c.epochs);
  r.unsigned64("seed", c.seed);
  {
    Reader t = r.child("teacher");
    t.unsigned_int("epochs", c.teacher.epochs);
    t.get("learning_rate", c.teacher.learning_rate);
    t.get("optimizer", c.teacher.optimizer);
    t.finish();
  }
  {
    Reader d = r.child("data");
    d.get("source", c.data.source);
    d.unsigned_int("train_scenes", c.data.train_scenes);
    d.unsigned_int("val_scenes", c.data.val_scenes);
    d.unsigned64("scene_seed", c.data.scene_seed);
    d.get("root", c.data.root);
    d.get("remap", c.data.remap);
    d.finish();
  }
  {
    Reader a = r.child("ablation");
    a.get("logit_kd", c.ablation.logit_kd);
    a.get("vpd", c.ablation.vpd);
    std::string mode = to_string(c.ablation.compression_mode);
    a.get("compression_mode", mode);
    try {
      c.ablation.compression_mode = parse_compression_mode(mode);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("config: ablation.compression_mode: ") + e.what());
    }
    a.get("domain_transfer", c.ablation.domain_transfer);
    a.get("cross_attention", c.ablation.cross_attention);
    a.finish();
  }
  r.finish();
  c.validate();
  return c;
}

TrainConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json(j);
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig cfg = parse_config(ss.str());
  if (cfg.data.source == "files") {
    // File paths inside a config resolve against the config's directory.
    std::filesystem::path root(cfg.data.root);
    if (root.is_relative()) cfg.data.root = (path.parent_path() / root).lexically_normal().string();
  }
  return cfg;
}

json config_to_json(const TrainConfig& c) {
  return json{
      {"grid",
       {{"rho_min", c.grid.rho_min},
        {"rho_max", c.grid.rho_max},
        {"rho_bins", c.grid.rho_bins},
        {"theta_bins", c.grid.theta_bins},
        {"z_min", c.grid.z_min},
        {"z_max", c.grid.z_max},
        {"z_bins", c.grid.z_bins}}},
      {"num_classes", c.num_classes},
      {"ignore_id", c.ignore_id},
      {"class_names", c.class_names},
      {"c_v", c.c_v},
      {"c_b", c.c_b},
      {"layers", c.layers},
      {"vpd_layers", c.vpd_layers},
      {"attention_dim", c.attention_dim},
      {"lwd", {{"enabled", c.lwd.enabled}, {"k_rho", c.lwd.k_rho}, {"k_theta", c.lwd.k_theta}, {"m", c.lwd.m}}},
      {"loss_weights",
       {{"beta1", c.loss_weights.beta1}, {"beta2", c.loss_weights.beta2}, {"beta3", c.loss_weights.beta3}}},
      {"temperature", c.temperature},
      {"optimizer", c.optimizer},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"teacher",
       {{"epochs", c.teacher.epochs},
        {"learning_rate", c.teacher.learning_rate},
        {"optimizer", c.teacher.optimizer}}},
      {"data",
       {{"source", c.data.source},
        {"train_scenes", c.data.train_scenes},
        {"val_scenes", c.data.val_scenes},
        {"scene_seed", c.data.scene_seed},
        {"root", c.data.root},
        {"remap", c.data.remap}}},
      {"ablation",
       {{"logit_kd", c.ablation.logit_kd},
        {"vpd", c.ablation.vpd},
        {"compression_mode", to_string(c.ablation.compression_mode)},
        {"domain_transfer", c.ablation.domain_transfer},
        {"cross_attention", c.ablation.cross_attention}}},
  };
}

}  // namespace bevkd
