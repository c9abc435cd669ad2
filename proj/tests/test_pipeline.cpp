// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "bevkd/checkpoint.hpp"
#include "bevkd/config.hpp"
#include "bevkd/dataset.hpp"
#include "bevkd/error.hpp"
#include "bevkd/pipeline.hpp"

using namespace bevkd;
namespace fs = std::filesystem;

namespace {

// Small enough to train in well under a second.
TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.data.train_scenes = 4;
  cfg.data.val_scenes = 2;
  cfg.c_v = cfg.c_b = 8;
  cfg.attention_dim = 8;
  cfg.epochs = 2;
  cfg.teacher.epochs = 2;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("bevkd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("config rejects unknown keys and inconsistent settings") {
  CHECK_THROWS_AS(parse_config(R"({"epochs": 3, "epohcs": 4})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"lwd": {"k_rho": 2, "bogus": 1}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"vpd_layers": []})"), ValidationError);
  CHECK_NOTHROW(parse_config(R"({"vpd_layers": [], "ablation": {"vpd": false}})"));
  CHECK_THROWS_AS(parse_config(R"({"c_b": 8, "ablation": {"compression_mode": "scatter_max"}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"vpd_layers": [4]})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"loss_weights": {"beta1": -1}})"), ValidationError);
  CHECK_THROWS_AS(parse_config("{not json"), ValidationError);
}

TEST_CASE("config JSON round trip is stable") {
  TrainConfig cfg = tiny_config();
  cfg.seed = 9;
  cfg.ablation.logit_kd = false;
  const auto j = config_to_json(cfg);
  CHECK(config_to_json(config_from_json(j)) == j);
  CHECK(config_from_json(j).seed == 9);
  CHECK_FALSE(config_from_json(j).ablation.logit_kd);
}

TEST_CASE("shipped configs parse") {
  const fs::path dir = fs::path(BEVKD_SOURCE_DIR) / "configs";
  for (const char* name : {"default.json", "desk_experiment.json", "desk_baseline.json"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_config(dir / name));
  }
  CHECK(config_to_json(load_config(dir / "default.json")) == config_to_json(TrainConfig{}));
  const TrainConfig base = load_config(dir / "desk_baseline.json");
  CHECK_FALSE(base.any_distillation());
}

TEST_CASE("checkpoint encoding round trips byte for byte") {
  const TrainConfig cfg = tiny_config();
  const StudentModel s = StudentModel::create(cfg, 5);
  Checkpoint ck{"student", 3, config_to_json(cfg), nlohmann::json::object(), s.params};
  const auto bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.kind == "student");
  CHECK(back.epoch == 3);
  CHECK(back.params == s.params);
  CHECK(encode_checkpoint(back) == bytes);

  const fs::path dir = scratch_dir("ckpt");
  save_checkpoint(dir / "a.ckpt", ck);
  save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
  CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), ValidationError);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 8);
  CHECK_THROWS_AS(decode_checkpoint(cut), ValidationError);
}

TEST_CASE("assign_parameters checks names and shapes") {
  const TrainConfig cfg = tiny_config();
  TeacherModel a = TeacherModel::create(cfg, 1);
  const TeacherModel b = TeacherModel::create(cfg, 2);
  assign_parameters(a.params, b.params);
  CHECK(a.params == b.params);
  TrainConfig wide = cfg;
  wide.c_v = 12;
  CHECK_THROWS_AS(assign_parameters(a.params, TeacherModel::create(wide, 1).params), ValidationError);
}

TEST_CASE("teacher pretrained for zero epochs equals its initialization") {
  TrainConfig cfg = tiny_config();
  cfg.teacher.epochs = 0;
  const Dataset data = load_dataset(cfg);
  const TrainResult r = pretrain_teacher(cfg, data);
  CHECK(r.checkpoint.params == TeacherModel::create(cfg, cfg.seed).params);
  CHECK(r.steps.empty());
}

TEST_CASE("training is bit-reproducible and logs satisfy the objective identity") {
  const TrainConfig cfg = tiny_config();
  const Dataset data = load_dataset(cfg);
  const TrainResult teacher = pretrain_teacher(cfg, data);
  const TrainResult a = train_student(cfg, teacher.checkpoint, data);
  const TrainResult b = train_student(cfg, teacher.checkpoint, data);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));

  const fs::path da = scratch_dir("repro_a"), db = scratch_dir("repro_b");
  write_train_logs(a, da);
  write_train_logs(b, db);
  for (const char* f : {"metrics.csv", "steps.csv", "alignment.csv"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(da / f));
    CHECK(slurp(da / f) == slurp(db / f));
  }

  REQUIRE(a.steps.size() == cfg.epochs * (cfg.data.train_scenes / cfg.batch_size));
  const auto& w = cfg.loss_weights;
  for (const auto& s : a.steps) {
    CHECK(s.vpd > 0.0);
    CHECK(s.lwd > 0.0);
    CHECK(s.logit > 0.0);
    const double expect = s.wce + s.lovasz + w.beta1 * s.vpd + w.beta2 * s.lwd + w.beta3 * s.logit;
    CHECK(std::abs(s.total - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
  }
  CHECK(a.alignment.size() == cfg.epochs + 1);

  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  CHECK(encode_checkpoint(train_student(other, teacher.checkpoint, data).checkpoint) !=
        encode_checkpoint(a.checkpoint));
}

TEST_CASE("with distillation off only the segmentation terms remain") {
  TrainConfig cfg = tiny_config();
  cfg.ablation.logit_kd = false;
  cfg.ablation.vpd = false;
  cfg.lwd.enabled = false;
  const Dataset data = load_dataset(cfg);
  const TrainResult teacher = pretrain_teacher(cfg, data);
  const TrainResult r = train_student(cfg, teacher.checkpoint, data);
  for (const auto& s : r.steps) {
    CHECK(s.vpd == 0.0);
    CHECK(s.lwd == 0.0);
    CHECK(s.logit == 0.0);
    CHECK(std::abs(s.total - (s.wce + s.lovasz)) <= 1e-12);
  }
  CHECK(r.alignment.empty());
  // No distillation parameters are created or saved.
  for (std::size_t i = 0; i < r.checkpoint.params.size(); ++i) {
    CHECK(r.checkpoint.params.name(i).rfind("distill.", 0) == std::string::npos);
  }
}

TEST_CASE("student refuses a teacher built for another grid") {
  TrainConfig cfg = tiny_config();
  const Dataset data = load_dataset(cfg);
  TrainConfig tcfg = cfg;
  tcfg.teacher.epochs = 0;
  tcfg.grid.z_bins = 4;
  const TrainResult teacher = pretrain_teacher(tcfg, data);
  CHECK_THROWS_WITH_AS(train_student(cfg, teacher.checkpoint, data), doctest::Contains("grid mismatch"),
                       ValidationError);
  const TrainResult student = train_student(tiny_config(), pretrain_teacher(cfg, data).checkpoint, data);
  CHECK_THROWS_AS(train_student(cfg, student.checkpoint, data), ValidationError);
}

TEST_CASE("evaluation is deterministic and counts every labeled in-grid point") {
  TrainConfig cfg = tiny_config();
  cfg.teacher.epochs = 1;
  const Dataset data = load_dataset(cfg);
  const LoadedModel model = load_model(pretrain_teacher(cfg, data).checkpoint);
  const EvalReport a = evaluate(model, data.val);
  const EvalReport b = evaluate(model, data.val);
  CHECK(a.miou.mean == b.miou.mean);
  CHECK(a.accuracy == b.accuracy);

  std::uint64_t expected = 0;
  for (const auto& sc : data.val) {
    const PreparedScene ps = prepare_scene(sc.cloud, sc.labels, cfg);
    for (Label y : ps.targets) expected += (y != cfg.ignore_id);
  }
  CHECK(a.points == expected);
  CHECK(a.miou.present.size() == cfg.num_classes);

  const fs::path dir = scratch_dir("eval");
  write_eval_report(a, dir);
  const std::string csv = slurp(dir / "miou.csv");
  CHECK(csv.rfind("class,iou\n", 0) == 0);
  CHECK(csv.find("\nmIoU,") != std::string::npos);
  CHECK_THROWS_AS(evaluate(model, {}), ValidationError);
}

TEST_CASE("predict labels every in-grid point of an empty or single-class scene") {
  const TrainConfig cfg = tiny_config();
  const LoadedModel model = load_model(
      Checkpoint{"student", 0, config_to_json(cfg), nlohmann::json::object(), StudentModel::create(cfg, 3).params});
  PointCloud empty;
  const PreparedScene e = prepare_scene(empty, LabelSet{}, cfg);
  CHECK(predict(model, e).empty());

  PointCloud pc;
  LabelSet ls;
  for (int k = 0; k < 20; ++k) {
    pc.points.push_back({3.0 + 0.1 * k, 1.0, 0.0, 0.5});
    ls.labels.push_back(2);
  }
  pc.points.push_back({100.0, 0.0, 0.0, 0.5});  // outside the grid
  ls.labels.push_back(1);
  const PreparedScene s = prepare_scene(pc, ls, cfg);
  CHECK(s.targets.size() == 20);
  const auto pred = predict(model, s);
  CHECK(pred.size() == 20);
  for (Label y : pred) CHECK(y < cfg.num_classes);
}

TEST_CASE("height map export counts occupied z bins per pillar") {
  TrainConfig cfg;
  const fs::path dir = scratch_dir("maps");
  PointCloud pc;
  // Theta spans [-pi, pi): just above -pi is column 0, just below pi is the last column.
  // Column 0 holds three distinct z bins, one of them twice.
  for (double z : {-1.9, -0.1, 1.9, 1.95}) pc.points.push_back({-5.0, -0.01, z, 0.5});
  pc.points.push_back({-5.0, 0.01, 0.0, 0.5});
  const MapExport ex = export_maps(cfg, pc, nullptr, nullptr, dir);
  CHECK(ex.height.total() == 4);
  CHECK(ex.height.at(5, 0) == 3);
  CHECK(ex.height.at(5, cfg.grid.theta_bins - 1) == 1);
  CHECK_FALSE(ex.errors.has_value());

  std::ifstream csv(dir / "height_map.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    if (rows == 5) CHECK(line.rfind("3,0,", 0) == 0);
    ++rows;
  }
  CHECK(rows == cfg.grid.rho_bins);

  const std::string pgm = slurp(dir / "height_map.pgm");
  const std::string header = "P5\n24 16\n255\n";
  REQUIRE(pgm.size() == header.size() + 16 * 24);
  CHECK(pgm.substr(0, header.size()) == header);
  const auto* px = reinterpret_cast<const unsigned char*>(pgm.data() + header.size());
  CHECK(px[5 * 24 + 0] == 255);
  CHECK(px[5 * 24 + 23] == 85);

  const fs::path dir2 = scratch_dir("maps_empty");
  const MapExport none = export_maps(cfg, PointCloud{}, nullptr, nullptr, dir2);
  CHECK(none.height.total() == 0);
  const std::string pgm2 = slurp(dir2 / "height_map.pgm");
  for (std::size_t i = header.size(); i < pgm2.size(); ++i) CHECK(pgm2[i] == 0);
}

TEST_CASE("error map counts mislabeled points per pillar") {
  const TrainConfig cfg = tiny_config();
  const LoadedModel model = load_model(
      Checkpoint{"teacher", 0, config_to_json(cfg), nlohmann::json::object(), TeacherModel::create(cfg, 4).params});
  const auto [pc, ls] = synth_scene(11, default_scene_spec());
  const MapExport ex = export_maps(cfg, pc, &ls, &model, scratch_dir("maps_err"));
  REQUIRE(ex.errors.has_value());
  const PreparedScene s = prepare_scene(pc, ls, cfg);
  const auto pred = predict(model, s);
  std::uint64_t wrong = 0, counted = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += (s.targets[i] != cfg.ignore_id && pred[i] != s.targets[i]);
  for (auto v : *ex.errors) counted += v;
  CHECK(counted == wrong);
}

TEST_CASE("synthetic dataset written to disk loads back through the files source") {
  TrainConfig cfg = tiny_config();
  const fs::path dir = scratch_dir("synth");
  write_synthetic_dataset(cfg, dir);
  const TrainConfig from_disk = load_config(dir / "data.json");
  CHECK(from_disk.data.source == "files");
  const Dataset disk = load_dataset(from_disk);
  const Dataset mem = load_dataset(cfg);
  REQUIRE(disk.train.size() == mem.train.size());
  REQUIRE(disk.val.size() == mem.val.size());
  auto same = [](const Scene& a, const Scene& b) {
    if (a.labels.labels != b.labels.labels || a.cloud.size() != b.cloud.size()) return false;
    for (std::size_t i = 0; i < a.cloud.size(); ++i) {
      const Point& p = a.cloud.points[i];
      const Point& q = b.cloud.points[i];
      auto f = [](double v) { return static_cast<double>(static_cast<float>(v)); };
      if (p.x != f(q.x) || p.y != f(q.y) || p.z != f(q.z) || p.intensity != f(q.intensity)) return false;
    }
    return true;
  };
  for (std::size_t i = 0; i < mem.train.size(); ++i) CHECK(same(disk.train[i], mem.train[i]));
  for (std::size_t i = 0; i < mem.val.size(); ++i) CHECK(same(disk.val[i], mem.val[i]));

  // Raw files keep SemanticKITTI-style ids with instance bits above the semantic id.
  const std::string raw = slurp(dir / "train" / "000000.label");
  bool has_instance = false;
  for (std::size_t i = 2; i < raw.size(); i += 4) has_instance |= (raw[i] != 0 || raw[i + 1] != 0);
  CHECK(has_instance);
}

TEST_CASE("files source reports missing directories") {
  TrainConfig cfg = tiny_config();
  cfg.data.source = "files";
  cfg.data.root = (fs::temp_directory_path() / "bevkd_test_does_not_exist").string();
  CHECK_THROWS(load_dataset(cfg));
}

TEST_CASE("gradient suite passes and detects a corrupted module") {
  const TrainConfig cfg;
  const GradcheckSummary ok = run_gradcheck(cfg, 1);
  CHECK(ok.passed);
  CHECK(ok.entries.size() == gradcheck_modules().size());
  for (const auto& e : ok.entries) {
    CAPTURE(e.module);
    CHECK(e.max_relative_error < kGradcheckTolerance);
    CHECK(e.entries_checked > 0);
  }
  const GradcheckSummary bad = run_gradcheck(cfg, 1, "vpd_loss");
  CHECK_FALSE(bad.passed);
  for (const auto& e : bad.entries) CHECK(e.passed == (e.module != "vpd_loss"));
  CHECK_THROWS_AS(run_gradcheck(cfg, 1, "no_such_module"), ValidationError);
}
