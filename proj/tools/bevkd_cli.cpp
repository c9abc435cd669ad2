// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library only through the C interface.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>

#include "bevkd/bevkd.h"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (defaults apply when omitted)");
  cmd->add_option("--seed", c.seed, "Override the config seed");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

int fail(bevkd_status st) {
  std::fprintf(stderr, "error: %s\n", bevkd_last_error());
  return static_cast<int>(st);
}

struct ConfigDeleter {
  void operator()(bevkd_config* c) const { bevkd_config_free(c); }
};
struct CheckpointDeleter {
  void operator()(bevkd_checkpoint* c) const { bevkd_checkpoint_free(c); }
};
struct ScanDeleter {
  void operator()(bevkd_scan* s) const { bevkd_scan_free(s); }
};
using ConfigPtr = std::unique_ptr<bevkd_config, ConfigDeleter>;
using CheckpointPtr = std::unique_ptr<bevkd_checkpoint, CheckpointDeleter>;
using ScanPtr = std::unique_ptr<bevkd_scan, ScanDeleter>;

bevkd_status open_config(const Common& c, ConfigPtr& out) {
  bevkd_config* raw = nullptr;
  bevkd_status st = bevkd_config_load(c.config.empty() ? nullptr : c.config.c_str(), &raw);
  out.reset(raw);
  if (st == BEVKD_OK && c.seed) st = bevkd_config_set_seed(raw, *c.seed);
  return st;
}

bevkd_status open_checkpoint(const std::string& path, CheckpointPtr& out) {
  bevkd_checkpoint* raw = nullptr;
  const bevkd_status st = bevkd_checkpoint_load(path.c_str(), &raw);
  out.reset(raw);
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bevkd: voxel-to-BEV knowledge distillation for LiDAR segmentation"};
  app.require_subcommand(1);

  Common pre, train, eval, grad, maps, synth;
  std::string teacher_path, checkpoint_path, scan_path, labels_path, map_checkpoint, corrupt;

  auto* c_pre = app.add_subcommand("pretrain-teacher", "Train the toy voxel teacher");
  add_common(c_pre, pre);
  auto* c_train = app.add_subcommand("train-student", "Distill the teacher into the BEV student");
  add_common(c_train, train);
  c_train->add_option("--teacher", teacher_path, "Teacher checkpoint")->required();
  auto* c_eval = app.add_subcommand("evaluate", "Per-class IoU and mIoU on the val split");
  add_common(c_eval, eval);
  c_eval->add_option("--checkpoint", checkpoint_path, "Teacher or student checkpoint")->required();
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable module");
  add_common(c_grad, grad);
  c_grad->add_option("--corrupt-module", corrupt, "Self-test: break one module's gradient on purpose");
  auto* c_maps = app.add_subcommand("export-maps", "Write height and error maps as CSV and PGM");
  add_common(c_maps, maps);
  c_maps->add_option("--scan", scan_path, "Scan .bin file")->required();
  c_maps->add_option("--labels", labels_path, "Matching .label file");
  c_maps->add_option("--checkpoint", map_checkpoint, "Model used for the error map");
  auto* c_synth = app.add_subcommand("synth-data", "Write the synthetic dataset to disk");
  add_common(c_synth, synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  ConfigPtr cfg;
  bevkd_status st = BEVKD_OK;

  if (c_pre->parsed()) {
    if ((st = open_config(pre, cfg)) != BEVKD_OK) return fail(st);
    bevkd_checkpoint* raw = nullptr;
    if ((st = bevkd_pretrain_teacher(cfg.get(), pre.out.c_str(), &raw)) != BEVKD_OK) return fail(st);
    bevkd_checkpoint_free(raw);
    std::printf("teacher checkpoint: %s/teacher.ckpt\n", pre.out.c_str());
    return 0;
  }
  if (c_train->parsed()) {
    if ((st = open_config(train, cfg)) != BEVKD_OK) return fail(st);
    CheckpointPtr teacher;
    if ((st = open_checkpoint(teacher_path, teacher)) != BEVKD_OK) return fail(st);
    bevkd_checkpoint* raw = nullptr;
    if ((st = bevkd_train_student(cfg.get(), teacher.get(), train.out.c_str(), &raw)) != BEVKD_OK) return fail(st);
    bevkd_checkpoint_free(raw);
    std::printf("student checkpoint: %s/student.ckpt\n", train.out.c_str());
    return 0;
  }
  if (c_eval->parsed()) {
    if ((st = open_config(eval, cfg)) != BEVKD_OK) return fail(st);
    CheckpointPtr model;
    if ((st = open_checkpoint(checkpoint_path, model)) != BEVKD_OK) return fail(st);
    double miou = 0.0, acc = 0.0;
    if ((st = bevkd_evaluate(cfg.get(), model.get(), eval.out.c_str(), &miou, &acc)) != BEVKD_OK) return fail(st);
    std::printf("mIoU %.6f  point accuracy %.6f  report: %s/miou.csv\n", miou, acc, eval.out.c_str());
    return 0;
  }
  if (c_grad->parsed()) {
    if ((st = open_config(grad, cfg)) != BEVKD_OK) return fail(st);
    int passed = 0;
    double worst = 0.0;
    st = bevkd_gradcheck(cfg.get(), grad.seed.value_or(0), corrupt.empty() ? nullptr : corrupt.c_str(),
                         grad.out.c_str(), &passed, &worst);
    if (st != BEVKD_OK) return fail(st);
    std::printf("max relative error %.3e  report: %s/gradcheck.csv\n", worst, grad.out.c_str());
    if (!passed) {
      std::fprintf(stderr, "FAIL: %s\n", bevkd_last_error());
      return 2;
    }
    std::printf("PASS\n");
    return 0;
  }
  if (c_maps->parsed()) {
    if ((st = open_config(maps, cfg)) != BEVKD_OK) return fail(st);
    bevkd_scan* raw_scan = nullptr;
    st = bevkd_scan_load(cfg.get(), scan_path.c_str(), labels_path.empty() ? nullptr : labels_path.c_str(), &raw_scan);
    ScanPtr scan(raw_scan);
    if (st != BEVKD_OK) return fail(st);
    CheckpointPtr model;
    if (!map_checkpoint.empty() && (st = open_checkpoint(map_checkpoint, model)) != BEVKD_OK) return fail(st);
    if ((st = bevkd_export_maps(cfg.get(), scan.get(), model.get(), maps.out.c_str())) != BEVKD_OK) return fail(st);
    std::printf("maps written to %s\n", maps.out.c_str());
    return 0;
  }
  if (c_synth->parsed()) {
    if ((st = open_config(synth, cfg)) != BEVKD_OK) return fail(st);
    if ((st = bevkd_synth_data(cfg.get(), synth.out.c_str())) != BEVKD_OK) return fail(st);
    std::printf("synthetic dataset written to %s\n", synth.out.c_str());
    return 0;
  }
  return 1;
}
