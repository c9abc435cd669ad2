// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Teacher pretraining, distillation training, evaluation, the gradient-check
// harness, and map exports.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bevkd/checkpoint.hpp"
#include "bevkd/dataset.hpp"
#include "bevkd/models.hpp"

namespace bevkd {

// Per-scene geometry shared by teacher and student. Point-wise vectors cover
// only points that fall inside the grid.
struct PreparedScene {
  SparseVoxelGrid voxels;  // feats: mean encoded point per voxel
  BevGrid bev;             // feats: mean encoded point per pillar
  ColumnLayout layout;
  std::vector<ColumnMatch> matches;
  std::vector<Index> point_voxel;
  std::vector<Index> point_pillar;
  std::vector<Label> targets;
  bool has_labels = false;
  HeightMap label_height;  // occupied z bins counting only voxels with a labeled point
};

PreparedScene prepare_scene(const PointCloud& cloud, const LabelSet& labels, const TrainConfig& cfg);

struct TeacherCache {
  std::vector<Tensor> features;  // per layer, one row per voxel
  Tensor point_logits;
};

TeacherCache run_teacher(const TeacherModel& teacher, const PreparedScene& scene);

struct LossTerms {
  Var wce, lovasz, vpd, lwd, logit, total;
};

struct StudentPass {
  LossTerms terms;
  Var point_logits;
  std::vector<std::pair<Var, Var>> aligned;  // (f_B', f_V) per distilled layer
};

// Builds the full objective for one scene on `tape`. `teacher` may be null
// when every distillation term is off; `regions` are the label-weight regions
// drawn for this step (empty disables that term).
StudentPass student_pass(Tape& tape, const Binding& b, const StudentModel& student, const PreparedScene& scene,
                         const TeacherCache* teacher, const TrainConfig& cfg, std::span<const std::size_t> regions,
                         std::span<const double> class_weights);

// Draws min(M, regions with height) regions from the scene's height map.
std::vector<std::size_t> choose_regions(const PreparedScene& scene, const TrainConfig& cfg, std::mt19937_64& rng);

struct EpochMetrics {
  std::size_t epoch = 0;
  double wce = 0, lovasz = 0, vpd = 0, lwd = 0, logit = 0, total = 0, train_miou = 0;
};

struct StepMetrics {
  std::size_t epoch = 0, step = 0;
  double wce = 0, lovasz = 0, vpd = 0, lwd = 0, logit = 0, total = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> epochs;
  std::vector<StepMetrics> steps;
  // Mean f_B'/f_V row cosine on the val split: entry 0 before training, then
  // one per epoch. Empty when the voxel-to-pillar term is off.
  std::vector<double> alignment;
};

TrainResult pretrain_teacher(const TrainConfig& cfg, const Dataset& data);
TrainResult train_student(const TrainConfig& cfg, const Checkpoint& teacher, const Dataset& data);

// metrics.csv, steps.csv and, when present, alignment.csv.
void write_train_logs(const TrainResult& result, const std::filesystem::path& out_dir);

struct LoadedModel {
  std::string kind;
  TrainConfig cfg;
  std::optional<TeacherModel> teacher;
  std::optional<StudentModel> student;
};

LoadedModel load_model(const Checkpoint& ckpt);

// Argmax class per in-grid point. Student points inherit their pillar's logits.
std::vector<Label> predict(const LoadedModel& model, const PreparedScene& scene);

struct EvalReport {
  MiouReport miou;
  double accuracy = 0.0;
  std::uint64_t points = 0;
  std::vector<std::string> class_names;
};

EvalReport evaluate(const LoadedModel& model, std::span<const Scene> scenes);
void write_eval_report(const EvalReport& report, const std::filesystem::path& out_dir);

struct GradcheckEntry {
  std::string module;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t entries_checked = 0;
  bool passed = false;
};

struct GradcheckSummary {
  std::vector<GradcheckEntry> entries;
  bool passed = false;
  double seconds = 0.0;
};

constexpr double kGradcheckTolerance = 1e-4;

std::vector<std::string> gradcheck_modules();

// Finite-difference checks over every differentiable module plus the full
// objective on toy networks. `corrupt_module` names a module whose gradient
// is deliberately scaled; it exists to prove the harness can fail.
GradcheckSummary run_gradcheck(const TrainConfig& cfg, std::uint64_t seed, const std::string& corrupt_module = "");
void write_gradcheck_report(const GradcheckSummary& summary, const std::filesystem::path& out_dir);

struct MapExport {
  HeightMap height;
  std::optional<std::vector<std::uint32_t>> errors;  // mislabeled points per pillar
};

// Height map of the scan, plus the error map when labels and a model are given.
MapExport export_maps(const TrainConfig& cfg, const PointCloud& cloud, const LabelSet* labels,
                      const LoadedModel* model, const std::filesystem::path& out_dir);

void write_map_csv(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                   std::span<const std::uint32_t> values);
// Binary 8-bit PGM, values scaled by 255 / max (all zero when max is 0).
void write_map_pgm(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                   std::span<const std::uint32_t> values);

}  // namespace bevkd
