// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>

#include "bevkd/error.hpp"
#include "bevkd/gradcheck.hpp"
#include "bevkd/pipeline.hpp"

namespace bevkd {
namespace {

Tensor uniform(std::mt19937_64& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t({r, c});
  for (auto& v : t.data()) v = d(rng);
  return t;
}

SparseVoxelGrid random_grid(std::mt19937_64& rng, std::size_t points, std::size_t width) {
  GridSpec spec;
  std::uniform_real_distribution<double> xy(-spec.rho_max, spec.rho_max), z(spec.z_min, spec.z_max);
  PointCloud pc;
  for (std::size_t k = 0; k < points; ++k) pc.points.push_back({xy(rng), xy(rng), z(rng), 0.5});
  SparseVoxelGrid grid = voxelize(pc, spec);
  grid.feats = uniform(rng, grid.size(), width);
  return grid;
}

// A reduced copy of `cfg` small enough for exhaustive-ish differencing.
TrainConfig toy_config(const TrainConfig& cfg) {
  TrainConfig t = cfg;
  t.grid = GridSpec{0.0, 16.0, 4, 6, -2.0, 2.0, 4};
  t.c_v = t.c_b = 4;
  t.attention_dim = 4;
  t.lwd.k_rho = 2;
  t.lwd.k_theta = 3;
  t.lwd.m = std::min<std::size_t>(cfg.lwd.m, 6);
  t.data = DataConfig{};
  t.validate();
  return t;
}

struct Suite {
  std::uint64_t seed;
  std::string corrupt;
  std::vector<GradcheckEntry> entries;

  void run(const std::string& module, ParameterSet& params, const LossBuilder& build, std::size_t max_entries = 0) {
    LossBuilder wrapped = build;
    if (module == corrupt) {
      wrapped = [build](Tape& t, const Binding& b) { return corrupt_gradient(build(t, b), 1.5); };
    }
    GradCheckOptions opt;
    opt.max_entries_per_parameter = max_entries;
    opt.seed = seed;
    const auto report = finite_diff_check(wrapped, params, opt);
    GradcheckEntry e;
    e.module = module;
    e.max_relative_error = report.max_relative_error;
    e.worst_parameter = report.worst_parameter;
    for (const auto& p : report.parameters) e.entries_checked += p.entries_checked;
    e.passed = report.passed(kGradcheckTolerance);
    entries.push_back(e);
  }
};

}  // namespace

std::vector<std::string> gradcheck_modules() {
  return {"domain_transfer", "cross_attention", "vpd_loss",    "height_embedding", "z_conv",
          "scatter_max",     "two_stage_compression",          "lwd_loss",         "weighted_ce",
          "lovasz_softmax",  "logit_kd",        "total_loss"};
}

GradcheckSummary run_gradcheck(const TrainConfig& cfg, std::uint64_t seed, const std::string& corrupt_module) {
  const auto modules = gradcheck_modules();
  if (!corrupt_module.empty() && std::find(modules.begin(), modules.end(), corrupt_module) == modules.end()) {
    throw ValidationError("gradcheck: unknown module '" + corrupt_module + "'");
  }
  const auto started = std::chrono::steady_clock::now();
  auto rng = derive_rng(seed, kGradcheck);
  Suite suite{seed, corrupt_module, {}};

  {
    ParameterSet p;
    auto x = p.add("x", uniform(rng, 6, 4, -2, 2));
    auto dt = DomainTransferParams::create(p, "transfer", 4, rng);
    p.value(dt.gamma) = uniform(rng, 1, 4, 0.5, 1.5);
    p.value(dt.beta) = uniform(rng, 1, 4, -0.3, 0.3);
    p.value(dt.second.bias) = uniform(rng, 1, 4, -0.3, 0.3);
    Tensor proj = uniform(rng, 6, 4);
    suite.run("domain_transfer", p, [=](Tape& t, const Binding& b) {
      return sum(mul(domain_transfer(b[x], dt, b), t.constant(proj)));
    });
  }
  {
    ParameterSet p;
    auto fv = p.add("f_v", uniform(rng, 5, 4));
    auto fb = p.add("f_b", uniform(rng, 5, 4));
    auto att = CrossAttentionParams::create(p, "attention", 4, 3, rng);
    p.value(att.w_v) = uniform(rng, 4, 4);
    Tensor proj = uniform(rng, 5, 4);
    suite.run("cross_attention", p, [=](Tape& t, const Binding& b) {
      return sum(mul(cross_attention(b[fv], b[fb], att, b), t.constant(proj)));
    });
  }
  {
    ParameterSet p;
    auto a = p.add("f_b_prime", uniform(rng, 6, 4));
    auto v = p.add("f_v", uniform(rng, 6, 4));
    suite.run("vpd_loss", p, [=](Tape&, const Binding& b) { return vpd_loss(b[a], b[v]); });
  }
  {
    auto grid = random_grid(rng, 60, 3);
    auto layout = column_layout(grid);
    ParameterSet p;
    auto f = p.add("voxel_feats", grid.feats);
    auto he = HeightEmbedding::create(p, "height", grid.spec.z_bins, 3, rng);
    Tensor proj = uniform(rng, grid.size(), 3);
    suite.run("height_embedding", p, [=](Tape& t, const Binding& b) {
      return sum(mul(height_embed(b[f], layout, he, b), t.constant(proj)));
    });
  }
  for (auto mode : {CompressionMode::ZConv, CompressionMode::ScatterMax}) {
    auto grid = random_grid(rng, 60, 3);
    auto layout = column_layout(grid);
    ParameterSet p;
    auto f = p.add("voxel_feats", grid.feats);
    auto zp = ZCompressParams::create(p, "compress", mode, grid.spec.z_bins, 3, 3, rng);
    if (mode == CompressionMode::ZConv) p.value(zp.bias) = uniform(rng, 1, 3, 0.2, 0.5);
    Tensor proj = uniform(rng, layout.num_columns(), 3);
    suite.run(to_string(mode), p, [=](Tape& t, const Binding& b) {
      return sum(mul(compress_columns(b[f], layout, zp, b), t.constant(proj)));
    });
  }
  {
    auto grid = random_grid(rng, 50, 3);
    auto layout = column_layout(grid);
    ParameterSet p;
    auto f = p.add("voxel_feats", grid.feats);
    auto ts = TwoStageCompression::create(p, "two_stage", grid.spec.z_bins, 3, 3, rng);
    p.value(ts.stage1_bias) = uniform(rng, 1, 3, 0.3, 0.6);
    p.value(ts.stage2.bias) = uniform(rng, 1, 3, 0.3, 0.6);
    Tensor proj = uniform(rng, layout.num_columns(), 3);
    suite.run("two_stage_compression", p, [=](Tape& t, const Binding& b) {
      return sum(mul(compress_two_stage(b[f], layout, ts, b), t.constant(proj)));
    });
  }
  {
    GridSpec g;
    auto part = RegionPartition::make(g, 4, 4);
    ParameterSet p;
    auto s = p.add("student_pillars", uniform(rng, g.num_pillars(), 3));
    auto c = p.add("teacher_columns", uniform(rng, 30, 3));
    std::vector<ColumnMatch> m;
    for (std::size_t j = 0; j < 30; ++j) m.push_back({j, (j * 11) % g.num_pillars()});
    std::vector<std::size_t> sel{0, 2, 5, 7, 9};
    suite.run("lwd_loss", p, [=](Tape&, const Binding& b) { return lwd_loss(b[s], b[c], sel, m, part); });
  }
  {
    ParameterSet p;
    auto x = p.add("logits", uniform(rng, 8, 4, -2, 2));
    std::vector<Label> y{0, 1, 2, 3, 255, 1, 2, 0};
    std::vector<double> w{0.5, 2.0, 1.0, 3.0};
    suite.run("weighted_ce", p, [=](Tape&, const Binding& b) { return weighted_ce(b[x], y, w, 255); });
  }
  {
    ParameterSet p;
    auto x = p.add("logits", uniform(rng, 8, 3, -2, 2));
    std::vector<Label> y{0, 1, 2, 2, 0, 255, 1, 1};
    suite.run("lovasz_softmax", p,
              [=](Tape&, const Binding& b) { return lovasz_softmax(softmax_rows(b[x]), y, 255); });
  }
  {
    ParameterSet p;
    auto x = p.add("student_logits", uniform(rng, 6, 4, -2, 2));
    Tensor teacher = uniform(rng, 6, 4, -2, 2);
    suite.run("logit_kd", p, [=](Tape&, const Binding& b) { return logit_kd(b[x], teacher, 2.0); });
  }
  {
    // The full objective on toy networks, with every term the config enables.
    const TrainConfig toy = toy_config(cfg);
    auto [cloud, labels] = synth_scene(seed, default_scene_spec());
    PointCloud small;
    LabelSet small_labels;
    for (std::size_t i = 0; i < cloud.size(); i += 8) {
      small.points.push_back(cloud.points[i]);
      small_labels.labels.push_back(labels.labels[i]);
    }
    const PreparedScene scene = prepare_scene(small, small_labels, toy);
    TeacherModel teacher = TeacherModel::create(toy, seed);
    const TeacherCache cache = run_teacher(teacher, scene);
    StudentModel student = StudentModel::create(toy, seed);
    // Shift biases off zero so no ReLU sits exactly on its kink.
    std::uniform_real_distribution<double> jitter(0.05, 0.15);
    for (std::size_t i = 0; i < student.params.size(); ++i) {
      if (student.params.name(i).ends_with(".bias"))
        for (auto& v : student.params.value(i).data()) v = jitter(rng);
    }
    auto sampler = derive_rng(seed, kRegionSampling);
    const auto regions = choose_regions(scene, toy, sampler);
    std::vector<double> weights(toy.num_classes, 1.0);
    for (std::size_t c = 0; c < weights.size(); ++c) weights[c] = 1.0 + 0.5 * static_cast<double>(c);
    const StudentModel* sp = &student;
    suite.run(
        "total_loss", student.params,
        [=, &scene, &cache](Tape& t, const Binding& b) {
          return student_pass(t, b, *sp, scene, &cache, toy, regions, weights).terms.total;
        },
        12);
  }

  GradcheckSummary summary;
  summary.entries = std::move(suite.entries);
  summary.passed = std::all_of(summary.entries.begin(), summary.entries.end(), [](const auto& e) { return e.passed; });
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return summary;
}

void write_gradcheck_report(const GradcheckSummary& summary, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "gradcheck.csv");
  if (!out) throw RuntimeError("cannot write gradcheck report in " + out_dir.string());
  out << "module,max_relative_error,worst_parameter,entries_checked,passed\n" << std::setprecision(6);
  for (const auto& e : summary.entries) {
    out << e.module << ',' << e.max_relative_error << ',' << e.worst_parameter << ',' << e.entries_checked << ','
        << (e.passed ? "yes" : "no") << '\n';
  }
}

}  // namespace bevkd
