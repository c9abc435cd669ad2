// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Exercises the shared library through its C interface only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bevkd/bevkd.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("bevkd_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

constexpr const char* kTiny = R"({
  "data": {"train_scenes": 4, "val_scenes": 2},
  "c_v": 8, "c_b": 8, "attention_dim": 8,
  "epochs": 1, "teacher": {"epochs": 1}
})";

bevkd_config* tiny() {
  bevkd_config* cfg = nullptr;
  REQUIRE(bevkd_config_parse(kTiny, &cfg) == BEVKD_OK);
  return cfg;
}

void write_u32(std::ofstream& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xFF));
}

void write_f32(std::ofstream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  write_u32(out, v);
}

}  // namespace

TEST_CASE("version and empty error") {
  CHECK(std::string(bevkd_version()) == "0.1.0");
  bevkd_config* cfg = nullptr;
  REQUIRE(bevkd_config_load(nullptr, &cfg) == BEVKD_OK);
  CHECK(std::string(bevkd_last_error()).empty());
  bevkd_config_free(cfg);
}

TEST_CASE("config errors map to validation status with a message") {
  bevkd_config* cfg = reinterpret_cast<bevkd_config*>(0x1);
  CHECK(bevkd_config_parse(R"({"nonsense": 1})", &cfg) == BEVKD_ERR_VALIDATION);
  CHECK(cfg == nullptr);
  CHECK(std::string(bevkd_last_error()).find("nonsense") != std::string::npos);
  CHECK(bevkd_config_parse(nullptr, &cfg) == BEVKD_ERR_VALIDATION);
  CHECK(bevkd_config_load("/nonexistent/bevkd.json", &cfg) != BEVKD_OK);
  CHECK(bevkd_config_set_seed(nullptr, 1) == BEVKD_ERR_VALIDATION);
  bevkd_config_free(nullptr);
  bevkd_checkpoint_free(nullptr);
  bevkd_scan_free(nullptr);
}

TEST_CASE("config JSON buffer protocol") {
  bevkd_config* cfg = tiny();
  REQUIRE(bevkd_config_set_seed(cfg, 77) == BEVKD_OK);
  size_t needed = 0;
  REQUIRE(bevkd_config_to_json(cfg, nullptr, 0, &needed) == BEVKD_OK);
  REQUIRE(needed > 1);
  std::vector<char> small(needed - 1);
  CHECK(bevkd_config_to_json(cfg, small.data(), small.size(), &needed) == BEVKD_ERR_VALIDATION);
  std::vector<char> buf(needed);
  REQUIRE(bevkd_config_to_json(cfg, buf.data(), buf.size(), nullptr) == BEVKD_OK);
  const std::string text(buf.data());
  CHECK(text.size() + 1 == needed);
  CHECK(text.find("\"seed\": 77") != std::string::npos);

  bevkd_config* again = nullptr;
  REQUIRE(bevkd_config_parse(text.c_str(), &again) == BEVKD_OK);
  std::vector<char> buf2(needed);
  REQUIRE(bevkd_config_to_json(again, buf2.data(), buf2.size(), nullptr) == BEVKD_OK);
  CHECK(std::string(buf2.data()) == text);
  bevkd_config_free(again);
  bevkd_config_free(cfg);
}

TEST_CASE("train, save, reload, and evaluate through handles") {
  bevkd_config* cfg = tiny();
  const fs::path dir = scratch_dir("train");
  bevkd_checkpoint* teacher = nullptr;
  REQUIRE(bevkd_pretrain_teacher(cfg, (dir / "teacher").string().c_str(), &teacher) == BEVKD_OK);
  CHECK(fs::exists(dir / "teacher" / "teacher.ckpt"));
  CHECK(fs::exists(dir / "teacher" / "teacher_summary.json"));

  bevkd_checkpoint* reloaded = nullptr;
  REQUIRE(bevkd_checkpoint_load((dir / "teacher" / "teacher.ckpt").string().c_str(), &reloaded) == BEVKD_OK);
  bevkd_checkpoint* student = nullptr;
  REQUIRE(bevkd_train_student(cfg, reloaded, (dir / "student").string().c_str(), &student) == BEVKD_OK);
  CHECK(fs::exists(dir / "student" / "student.ckpt"));
  CHECK(fs::exists(dir / "student" / "metrics.csv"));
  CHECK(fs::exists(dir / "student" / "alignment.csv"));

  double miou = -1, acc = -1;
  REQUIRE(bevkd_evaluate(cfg, student, (dir / "eval").string().c_str(), &miou, &acc) == BEVKD_OK);
  CHECK(miou >= 0.0);
  CHECK(miou <= 1.0);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK(fs::exists(dir / "eval" / "miou.csv"));

  // A student checkpoint is not a teacher.
  CHECK(bevkd_train_student(cfg, student, (dir / "bad").string().c_str(), nullptr) == BEVKD_ERR_VALIDATION);
  CHECK(std::string(bevkd_last_error()).find("teacher") != std::string::npos);

  REQUIRE(bevkd_checkpoint_save(student, (dir / "copy.ckpt").string().c_str()) == BEVKD_OK);
  CHECK(fs::file_size(dir / "copy.ckpt") == fs::file_size(dir / "student" / "student.ckpt"));

  bevkd_checkpoint_free(student);
  bevkd_checkpoint_free(reloaded);
  bevkd_checkpoint_free(teacher);
  bevkd_config_free(cfg);
}

TEST_CASE("corrupt checkpoint file is a validation error") {
  const fs::path dir = scratch_dir("corrupt");
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  bevkd_checkpoint* ck = nullptr;
  CHECK(bevkd_checkpoint_load((dir / "junk.ckpt").string().c_str(), &ck) == BEVKD_ERR_VALIDATION);
  CHECK(ck == nullptr);
}

TEST_CASE("gradcheck reports pass and deliberate failure") {
  bevkd_config* cfg = nullptr;
  REQUIRE(bevkd_config_load(nullptr, &cfg) == BEVKD_OK);
  const fs::path dir = scratch_dir("gradcheck");
  int passed = -1;
  double err = -1;
  REQUIRE(bevkd_gradcheck(cfg, 3, nullptr, dir.string().c_str(), &passed, &err) == BEVKD_OK);
  CHECK(passed == 1);
  CHECK(err < 1e-4);
  REQUIRE(bevkd_gradcheck(cfg, 3, "lovasz_softmax", dir.string().c_str(), &passed, &err) == BEVKD_OK);
  CHECK(passed == 0);
  CHECK(err > 1e-4);
  CHECK(std::string(bevkd_last_error()).find("lovasz_softmax") != std::string::npos);
  CHECK(bevkd_gradcheck(cfg, 3, "unknown_module", dir.string().c_str(), &passed, &err) == BEVKD_ERR_VALIDATION);
  bevkd_config_free(cfg);
}

TEST_CASE("scan loading extracts the low 16 bits of each label") {
  const fs::path dir = scratch_dir("scan");
  {
    std::ofstream bin(dir / "s.bin", std::ios::binary);
    for (float v : {1.5f, -2.25f, 0.5f, 0.75f, 3.0f, 4.0f, -1.0f, 0.125f}) write_f32(bin, v);
    std::ofstream lab(dir / "s.label", std::ios::binary);
    write_u32(lab, 0x00030001u);  // raw id 1, instance 3
    write_u32(lab, 0x00070002u);
  }
  bevkd_config* cfg = nullptr;
  // Identity remap from defaults: raw ids map to themselves when below num_classes.
  REQUIRE(bevkd_config_load(nullptr, &cfg) == BEVKD_OK);
  bevkd_scan* scan = nullptr;
  REQUIRE(bevkd_scan_load(cfg, (dir / "s.bin").string().c_str(), (dir / "s.label").string().c_str(), &scan) ==
          BEVKD_OK);
  REQUIRE(bevkd_scan_num_points(scan) == 2);
  float pts[8];
  REQUIRE(bevkd_scan_copy_points(scan, pts, 8) == BEVKD_OK);
  CHECK(pts[0] == 1.5f);
  CHECK(pts[1] == -2.25f);
  CHECK(pts[7] == 0.125f);
  CHECK(bevkd_scan_copy_points(scan, pts, 7) == BEVKD_ERR_VALIDATION);
  std::uint32_t labels[2];
  REQUIRE(bevkd_scan_copy_labels(scan, labels, 2) == BEVKD_OK);
  CHECK(labels[0] == 1);
  CHECK(labels[1] == 2);

  REQUIRE(bevkd_export_maps(cfg, scan, nullptr, (dir / "maps").string().c_str()) == BEVKD_OK);
  CHECK(fs::exists(dir / "maps" / "height_map.csv"));
  CHECK(fs::exists(dir / "maps" / "height_map.pgm"));
  CHECK_FALSE(fs::exists(dir / "maps" / "error_map.csv"));
  bevkd_scan_free(scan);

  // Label count must match the point count.
  {
    std::ofstream lab(dir / "short.label", std::ios::binary);
    write_u32(lab, 1);
  }
  scan = nullptr;
  CHECK(bevkd_scan_load(cfg, (dir / "s.bin").string().c_str(), (dir / "short.label").string().c_str(), &scan) ==
        BEVKD_ERR_VALIDATION);
  CHECK(scan == nullptr);
  // Truncated point file.
  {
    std::ofstream bin(dir / "bad.bin", std::ios::binary);
    write_f32(bin, 1.0f);
  }
  CHECK(bevkd_scan_load(cfg, (dir / "bad.bin").string().c_str(), nullptr, &scan) == BEVKD_ERR_VALIDATION);
  bevkd_config_free(cfg);
}

TEST_CASE("synthetic data written by the library loads as a files dataset") {
  bevkd_config* cfg = tiny();
  const fs::path dir = scratch_dir("synth");
  REQUIRE(bevkd_synth_data(cfg, dir.string().c_str()) == BEVKD_OK);
  CHECK(fs::exists(dir / "train" / "000003.bin"));
  CHECK(fs::exists(dir / "val" / "000001.label"));
  bevkd_config* files = nullptr;
  REQUIRE(bevkd_config_load((dir / "data.json").string().c_str(), &files) == BEVKD_OK);
  bevkd_scan* scan = nullptr;
  REQUIRE(bevkd_scan_load(files, (dir / "val" / "000000.bin").string().c_str(),
                          (dir / "val" / "000000.label").string().c_str(), &scan) == BEVKD_OK);
  const size_t n = bevkd_scan_num_points(scan);
  REQUIRE(n > 0);
  std::vector<std::uint32_t> labels(n);
  REQUIRE(bevkd_scan_copy_labels(scan, labels.data(), n) == BEVKD_OK);
  for (auto y : labels) CHECK(y < 4);
  bevkd_scan_free(scan);
  bevkd_config_free(files);
  bevkd_config_free(cfg);
}
