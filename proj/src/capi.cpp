// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/bevkd.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <new>
#include <optional>
#include <string>

#include "bevkd/error.hpp"
#include "bevkd/pipeline.hpp"

struct bevkd_config {
  bevkd::TrainConfig cfg;
};

struct bevkd_checkpoint {
  bevkd::Checkpoint ckpt;
};

struct bevkd_scan {
  bevkd::PointCloud cloud;
  std::optional<bevkd::LabelSet> labels;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
bevkd_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return BEVKD_OK;
  } catch (const bevkd::ValidationError& e) {
    g_last_error = e.what();
    return BEVKD_ERR_VALIDATION;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return BEVKD_ERR_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return BEVKD_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return BEVKD_ERR_RUNTIME;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw bevkd::ValidationError(std::string(what) + " must not be NULL");
}

std::filesystem::path out_path(const char* dir) {
  need(dir, "out_dir");
  std::filesystem::path p(dir);
  try {
    std::filesystem::create_directories(p);
  } catch (const std::filesystem::filesystem_error& e) {
    throw bevkd::RuntimeError(e.what());
  }
  return p;
}

void write_summary(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw bevkd::RuntimeError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

extern "C" {

const char* bevkd_last_error(void) { return g_last_error.c_str(); }

const char* bevkd_version(void) { return "0.1.0"; }

bevkd_status bevkd_config_load(const char* path, bevkd_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto h = std::make_unique<bevkd_config>();
    if (path != nullptr) h->cfg = bevkd::load_config(path);
    *out = h.release();
  });
}

bevkd_status bevkd_config_parse(const char* json_text, bevkd_config** out) {
  return guarded([&] {
    need(json_text, "json_text");
    need(out, "out");
    *out = nullptr;
    auto h = std::make_unique<bevkd_config>();
    h->cfg = bevkd::parse_config(json_text);
    *out = h.release();
  });
}

bevkd_status bevkd_config_set_seed(bevkd_config* cfg, uint64_t seed) {
  return guarded([&] {
    need(cfg, "cfg");
    cfg->cfg.seed = seed;
  });
}

bevkd_status bevkd_config_to_json(const bevkd_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    need(cfg, "cfg");
    const std::string text = bevkd::config_to_json(cfg->cfg).dump(2);
    if (needed) *needed = text.size() + 1;
    if (buf == nullptr || cap == 0) return;
    if (cap < text.size() + 1) throw bevkd::ValidationError("buffer too small for config JSON");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

void bevkd_config_free(bevkd_config* cfg) { delete cfg; }

bevkd_status bevkd_checkpoint_load(const char* path, bevkd_checkpoint** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto h = std::make_unique<bevkd_checkpoint>();
    h->ckpt = bevkd::load_checkpoint(path);
    *out = h.release();
  });
}

bevkd_status bevkd_checkpoint_save(const bevkd_checkpoint* ckpt, const char* path) {
  return guarded([&] {
    need(ckpt, "ckpt");
    need(path, "path");
    bevkd::save_checkpoint(path, ckpt->ckpt);
  });
}

void bevkd_checkpoint_free(bevkd_checkpoint* ckpt) { delete ckpt; }

bevkd_status bevkd_pretrain_teacher(const bevkd_config* cfg, const char* out_dir, bevkd_checkpoint** out) {
  return guarded([&] {
    need(cfg, "cfg");
    const auto dir = out_path(out_dir);
    const auto data = bevkd::load_dataset(cfg->cfg);
    auto result = bevkd::pretrain_teacher(cfg->cfg, data);
    bevkd::save_checkpoint(dir / "teacher.ckpt", result.checkpoint);
    bevkd::write_train_logs(result, dir);
    const auto report = bevkd::evaluate(bevkd::load_model(result.checkpoint), data.train);
    write_summary(dir / "teacher_summary.json",
                  {{"train_point_accuracy", report.accuracy}, {"train_miou", report.miou.mean}});
    if (out) *out = new bevkd_checkpoint{std::move(result.checkpoint)};
  });
}

bevkd_status bevkd_train_student(const bevkd_config* cfg, const bevkd_checkpoint* teacher, const char* out_dir,
                                 bevkd_checkpoint** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(teacher, "teacher");
    const auto dir = out_path(out_dir);
    const auto data = bevkd::load_dataset(cfg->cfg);
    auto result = bevkd::train_student(cfg->cfg, teacher->ckpt, data);
    bevkd::save_checkpoint(dir / "student.ckpt", result.checkpoint);
    bevkd::write_train_logs(result, dir);
    if (out) *out = new bevkd_checkpoint{std::move(result.checkpoint)};
  });
}

bevkd_status bevkd_evaluate(const bevkd_config* cfg, const bevkd_checkpoint* model, const char* out_dir,
                            double* miou, double* accuracy) {
  return guarded([&] {
    need(cfg, "cfg");
    need(model, "model");
    const auto dir = out_path(out_dir);
    const auto loaded = bevkd::load_model(model->ckpt);
    if (loaded.cfg.num_classes != cfg->cfg.num_classes) {
      throw bevkd::ValidationError("checkpoint and config disagree on the class count");
    }
    const auto data = bevkd::load_dataset(cfg->cfg);
    const auto report = bevkd::evaluate(loaded, data.val);
    bevkd::write_eval_report(report, dir);
    if (miou) *miou = report.miou.mean;
    if (accuracy) *accuracy = report.accuracy;
  });
}

bevkd_status bevkd_gradcheck(const bevkd_config* cfg, uint64_t seed, const char* corrupt_module, const char* out_dir,
                             int* passed, double* max_relative_error) {
  return guarded([&] {
    need(cfg, "cfg");
    const auto summary = bevkd::run_gradcheck(cfg->cfg, seed, corrupt_module ? corrupt_module : "");
    if (out_dir) bevkd::write_gradcheck_report(summary, out_path(out_dir));
    double worst = 0.0;
    std::string failed;
    for (const auto& e : summary.entries) {
      worst = std::max(worst, e.max_relative_error);
      if (!e.passed) failed += (failed.empty() ? "" : ", ") + e.module;
    }
    if (passed) *passed = summary.passed ? 1 : 0;
    if (max_relative_error) *max_relative_error = worst;
    if (!summary.passed) g_last_error = "gradient check failed: " + failed;
  });
}

bevkd_status bevkd_scan_load(const bevkd_config* cfg, const char* bin_path, const char* labels_path,
                             bevkd_scan** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(bin_path, "bin_path");
    need(out, "out");
    *out = nullptr;
    auto h = std::make_unique<bevkd_scan>();
    h->cloud = bevkd::read_point_cloud_bin(bin_path);
    if (labels_path) {
      auto labels = bevkd::remap_labels(bevkd::read_labels(labels_path), bevkd::config_remap(cfg->cfg));
      if (labels.size() != h->cloud.size()) throw bevkd::ValidationError("label count differs from point count");
      h->labels = std::move(labels);
    }
    *out = h.release();
  });
}

size_t bevkd_scan_num_points(const bevkd_scan* scan) { return scan ? scan->cloud.size() : 0; }

bevkd_status bevkd_scan_copy_points(const bevkd_scan* scan, float* dst, size_t cap) {
  return guarded([&] {
    need(scan, "scan");
    need(dst, "dst");
    if (cap < 4 * scan->cloud.size()) throw bevkd::ValidationError("point buffer too small");
    for (std::size_t i = 0; i < scan->cloud.size(); ++i) {
      const auto& p = scan->cloud.points[i];
      dst[4 * i] = static_cast<float>(p.x);
      dst[4 * i + 1] = static_cast<float>(p.y);
      dst[4 * i + 2] = static_cast<float>(p.z);
      dst[4 * i + 3] = static_cast<float>(p.intensity);
    }
  });
}

bevkd_status bevkd_scan_copy_labels(const bevkd_scan* scan, uint32_t* dst, size_t cap) {
  return guarded([&] {
    need(scan, "scan");
    need(dst, "dst");
    if (!scan->labels) throw bevkd::ValidationError("scan was loaded without labels");
    if (cap < scan->labels->size()) throw bevkd::ValidationError("label buffer too small");
    std::copy(scan->labels->labels.begin(), scan->labels->labels.end(), dst);
  });
}

void bevkd_scan_free(bevkd_scan* scan) { delete scan; }

bevkd_status bevkd_export_maps(const bevkd_config* cfg, const bevkd_scan* scan, const bevkd_checkpoint* model,
                               const char* out_dir) {
  return guarded([&] {
    need(cfg, "cfg");
    need(scan, "scan");
    const auto dir = out_path(out_dir);
    std::optional<bevkd::LoadedModel> loaded;
    if (model) loaded = bevkd::load_model(model->ckpt);
    bevkd::export_maps(cfg->cfg, scan->cloud, scan->labels ? &*scan->labels : nullptr, loaded ? &*loaded : nullptr,
                       dir);
  });
}

bevkd_status bevkd_synth_data(const bevkd_config* cfg, const char* out_dir) {
  return guarded([&] {
    need(cfg, "cfg");
    bevkd::write_synthetic_dataset(cfg->cfg, out_path(out_dir));
  });
}

}  // extern "C"
