// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "bevkd/error.hpp"
#include "bevkd/optim.hpp"

namespace bevkd {
namespace {

Var zero(Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

std::vector<Label> argmax_rows(const Tensor& logits) {
  std::vector<Label> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::vector<double> train_class_weights(const TrainConfig& cfg, const Dataset& data) {
  std::vector<LabelSet> sets;
  for (const auto& s : data.train) sets.push_back(s.labels);
  return compute_class_weights(sets, cfg.num_classes, cfg.ignore_id);
}

std::vector<PreparedScene> prepare_all(std::span<const Scene> scenes, const TrainConfig& cfg) {
  std::vector<PreparedScene> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(prepare_scene(s.cloud, s.labels, cfg));
  return out;
}

std::vector<Tensor> collect_grads(const Tape& tape, const Binding& b, std::size_t n) {
  std::vector<Tensor> g;
  g.reserve(n);
  for (std::size_t i = 0; i < n; ++i) g.push_back(tape.grad(b[i]));
  return g;
}

struct SegmentationLoss {
  Var wce, lovasz;
};

SegmentationLoss segmentation_loss(Tape& tape, Var point_logits, const PreparedScene& scene, const TrainConfig& cfg,
                                   std::span<const double> class_weights) {
  if (!scene.has_labels) return {zero(tape), zero(tape)};
  return {weighted_ce(point_logits, scene.targets, class_weights, cfg.ignore_id),
          lovasz_softmax(softmax_rows(point_logits), scene.targets, cfg.ignore_id)};
}

void check_teacher_compat(const TrainConfig& cfg, const TrainConfig& tcfg) {
  if (!(cfg.grid == tcfg.grid)) throw ValidationError("config/teacher grid mismatch");
  if (cfg.c_v != tcfg.c_v || cfg.layers != tcfg.layers || cfg.num_classes != tcfg.num_classes) {
    throw ValidationError("config/teacher mismatch in c_v, layers, or num_classes");
  }
}

double alignment_on(const StudentModel& student, const std::vector<PreparedScene>& scenes,
                    const std::vector<TeacherCache>& caches, const TrainConfig& cfg) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    Tape tape;
    auto b = Binding::frozen(tape, student.params);
    auto pass = student_pass(tape, b, student, scenes[i], &caches[i], cfg, {}, {});
    for (const auto& [fbp, fv] : pass.aligned) {
      if (fv.value().rows() == 0) continue;
      acc += mean_row_cosine(fbp.value(), fv.value());
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

}  // namespace

PreparedScene prepare_scene(const PointCloud& cloud, const LabelSet& labels, const TrainConfig& cfg) {
  if (labels.size() != cloud.size()) {
    throw ValidationError("scene has " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(cloud.size()) + " points");
  }
  PreparedScene s;
  const PointEncoder enc = polar_encoder(cfg.grid);
  s.voxels = voxelize(cloud, cfg.grid, enc);
  s.bev = pillarize(cloud, cfg.grid, enc);
  s.layout = column_layout(s.voxels);
  s.matches = match_columns(s.voxels, s.bev);
  std::vector<std::uint8_t> labeled(s.voxels.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Index v = s.voxels.point_voxel[i];
    if (v < 0) continue;
    s.point_voxel.push_back(v);
    s.point_pillar.push_back(s.bev.point_pillar[i]);
    const Label y = labels.labels[i];
    if (y != cfg.ignore_id && y >= cfg.num_classes) {
      throw ValidationError("label " + std::to_string(y) + " outside " + std::to_string(cfg.num_classes) + " classes");
    }
    s.targets.push_back(y);
    if (y != cfg.ignore_id) {
      s.has_labels = true;
      labeled[static_cast<std::size_t>(v)] = 1;
    }
  }
  s.label_height = height_map(s.voxels, labeled);
  return s;
}

TeacherCache run_teacher(const TeacherModel& teacher, const PreparedScene& scene) {
  Tape tape;
  auto b = Binding::frozen(tape, teacher.params);
  auto out = teacher.net.forward(b, tape.constant(scene.voxels.feats));
  TeacherCache c;
  for (const auto& f : out.features) c.features.push_back(f.value());
  c.point_logits = gather_rows(out.logits, scene.point_voxel).value();
  return c;
}

std::vector<std::size_t> choose_regions(const PreparedScene& scene, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (!cfg.lwd.enabled || scene.label_height.total() == 0) return {};
  const auto part = RegionPartition::make(cfg.grid, cfg.lwd.k_rho, cfg.lwd.k_theta);
  const auto w = region_weights(scene.label_height, part);
  const std::size_t m = std::min(cfg.lwd.m, positive_regions(w.probability));
  return sample_regions(w.probability, m, rng);
}

StudentPass student_pass(Tape& tape, const Binding& b, const StudentModel& student, const PreparedScene& scene,
                         const TeacherCache* teacher, const TrainConfig& cfg, std::span<const std::size_t> regions,
                         std::span<const double> class_weights) {
  StudentPass pass;
  const NetOutput out = student.net.forward(b, tape.constant(scene.bev.feats));
  pass.point_logits = gather_rows(out.logits, scene.point_pillar);
  LossTerms& t = pass.terms;
  if (class_weights.empty()) {
    t.wce = zero(tape);
    t.lovasz = zero(tape);
  } else {
    auto seg = segmentation_loss(tape, pass.point_logits, scene, cfg, class_weights);
    t.wce = seg.wce;
    t.lovasz = seg.lovasz;
  }
  t.vpd = t.lwd = t.logit = zero(tape);
  if (teacher != nullptr) {
    if (cfg.ablation.logit_kd) t.logit = logit_kd(pass.point_logits, teacher->point_logits, cfg.temperature);
    if (cfg.ablation.vpd && !student.distill.vpd.empty()) {
      std::vector<Var> per_layer;
      for (const auto& m : student.distill.vpd) {
        Var teacher_feats = tape.constant(teacher->features.at(m.layer - 1));
        Var columns = compress_columns(teacher_feats, scene.layout, m.compress, b);
        auto pair = flatten_and_transfer(columns, out.features.at(m.layer - 1), scene.matches,
                                         m.transfer ? &*m.transfer : nullptr, b);
        Var f_b_prime = m.attention && pair.f_v.value().rows() > 0
                            ? cross_attention(pair.f_v, pair.f_b, *m.attention, b)
                            : pair.f_b;
        per_layer.push_back(vpd_loss(f_b_prime, pair.f_v));
        pass.aligned.emplace_back(f_b_prime, pair.f_v);
      }
      t.vpd = vpd_total(per_layer);
    }
    if (cfg.lwd.enabled && !regions.empty() && student.distill.embed) {
      const std::size_t last = cfg.layers - 1;
      Var embedded = height_embed(tape.constant(teacher->features.at(last)), scene.layout, *student.distill.embed, b);
      Var columns = compress_two_stage(embedded, scene.layout, *student.distill.lwd_compress, b);
      const auto part = RegionPartition::make(cfg.grid, cfg.lwd.k_rho, cfg.lwd.k_theta);
      t.lwd = lwd_loss(out.features.at(last), columns, regions, scene.matches, part);
    }
  }
  t.total = total_loss(t.wce, t.lovasz, t.vpd, t.lwd, t.logit, cfg.loss_weights);
  return pass;
}

TrainResult pretrain_teacher(const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  TeacherModel teacher = TeacherModel::create(cfg, cfg.seed);
  const auto weights = train_class_weights(cfg, data);
  const auto scenes = prepare_all(data.train, cfg);
  auto opt = make_optimizer(cfg.teacher.optimizer, cfg.teacher.learning_rate);
  auto shuffle = derive_rng(cfg.seed, kShuffle);

  TrainResult result;
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.teacher.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    EpochMetrics em;
    em.epoch = epoch;
    ConfusionMatrix cm(cfg.num_classes);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      auto b = Binding::trainable(tape, teacher.params);
      Var batch_total = zero(tape);
      StepMetrics sm{epoch, ++step};
      for (std::size_t k = start; k < end; ++k) {
        const PreparedScene& s = scenes[order[k]];
        auto out = teacher.net.forward(b, tape.constant(s.voxels.feats));
        Var logits = gather_rows(out.logits, s.point_voxel);
        auto seg = segmentation_loss(tape, logits, s, cfg, weights);
        Var total = add(seg.wce, seg.lovasz);
        batch_total = add(batch_total, total);
        sm.wce += seg.wce.value().item();
        sm.lovasz += seg.lovasz.value().item();
        cm.accumulate(argmax_rows(logits.value()), s.targets, cfg.ignore_id);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      Var loss = scale(batch_total, inv);
      tape.backward(loss);
      opt->step(teacher.params, collect_grads(tape, b, teacher.params.size()));
      em.wce += sm.wce;
      em.lovasz += sm.lovasz;
      sm.wce *= inv;
      sm.lovasz *= inv;
      sm.total = sm.wce + sm.lovasz;
      result.steps.push_back(sm);
    }
    const double inv = 1.0 / static_cast<double>(scenes.size());
    em.wce *= inv;
    em.lovasz *= inv;
    em.total = em.wce + em.lovasz;
    em.train_miou = miou(cm).mean;
    result.epochs.push_back(em);
  }
  result.checkpoint.kind = "teacher";
  result.checkpoint.epoch = cfg.teacher.epochs;
  result.checkpoint.config = config_to_json(cfg);
  result.checkpoint.rng = {{"shuffle", rng_state(shuffle)}};
  result.checkpoint.params = teacher.params;
  return result;
}

TrainResult train_student(const TrainConfig& cfg, const Checkpoint& teacher_ckpt, const Dataset& data) {
  cfg.validate();
  if (teacher_ckpt.kind != "teacher") throw ValidationError("train_student needs a teacher checkpoint");
  const LoadedModel tm = load_model(teacher_ckpt);
  check_teacher_compat(cfg, tm.cfg);
  const TeacherModel& teacher = *tm.teacher;

  StudentModel student = StudentModel::create(cfg, cfg.seed);
  const auto weights = train_class_weights(cfg, data);
  const auto train = prepare_all(data.train, cfg);
  const auto val = prepare_all(data.val, cfg);
  // The teacher is frozen, so its outputs are computed once per scene.
  std::vector<TeacherCache> train_cache, val_cache;
  for (const auto& s : train) train_cache.push_back(run_teacher(teacher, s));
  for (const auto& s : val) val_cache.push_back(run_teacher(teacher, s));

  auto opt = make_optimizer(cfg.optimizer, cfg.learning_rate);
  auto shuffle = derive_rng(cfg.seed, kShuffle);
  auto sampler = derive_rng(cfg.seed, kRegionSampling);
  const bool track_alignment = cfg.ablation.vpd;

  TrainResult result;
  if (track_alignment) result.alignment.push_back(alignment_on(student, val, val_cache, cfg));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle);
    EpochMetrics em;
    em.epoch = epoch;
    ConfusionMatrix cm(cfg.num_classes);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Tape tape;
      auto b = Binding::trainable(tape, student.params);
      Var batch_total = zero(tape);
      StepMetrics sm{epoch, ++step};
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto regions = choose_regions(train[i], cfg, sampler);
        auto pass = student_pass(tape, b, student, train[i], &train_cache[i], cfg, regions, weights);
        batch_total = add(batch_total, pass.terms.total);
        sm.wce += pass.terms.wce.value().item();
        sm.lovasz += pass.terms.lovasz.value().item();
        sm.vpd += pass.terms.vpd.value().item();
        sm.lwd += pass.terms.lwd.value().item();
        sm.logit += pass.terms.logit.value().item();
        cm.accumulate(argmax_rows(pass.point_logits.value()), train[i].targets, cfg.ignore_id);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      tape.backward(scale(batch_total, inv));
      opt->step(student.params, collect_grads(tape, b, student.params.size()));
      em.wce += sm.wce;
      em.lovasz += sm.lovasz;
      em.vpd += sm.vpd;
      em.lwd += sm.lwd;
      em.logit += sm.logit;
      for (double* v : {&sm.wce, &sm.lovasz, &sm.vpd, &sm.lwd, &sm.logit}) *v *= inv;
      sm.total = total_loss_value(sm.wce, sm.lovasz, sm.vpd, sm.lwd, sm.logit, cfg.loss_weights);
      result.steps.push_back(sm);
    }
    const double inv = 1.0 / static_cast<double>(train.size());
    for (double* v : {&em.wce, &em.lovasz, &em.vpd, &em.lwd, &em.logit}) *v *= inv;
    em.total = total_loss_value(em.wce, em.lovasz, em.vpd, em.lwd, em.logit, cfg.loss_weights);
    em.train_miou = miou(cm).mean;
    result.epochs.push_back(em);
    if (track_alignment) result.alignment.push_back(alignment_on(student, val, val_cache, cfg));
  }
  result.checkpoint.kind = "student";
  result.checkpoint.epoch = cfg.epochs;
  result.checkpoint.config = config_to_json(cfg);
  result.checkpoint.rng = {{"shuffle", rng_state(shuffle)}, {"region_sampling", rng_state(sampler)}};
  result.checkpoint.params = student.params;
  return result;
}

void write_train_logs(const TrainResult& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw RuntimeError("cannot write " + p.string());
    out << std::setprecision(17);
    return out;
  };
  {
    auto out = open(out_dir / "metrics.csv");
    out << "epoch,wce,lovasz,vpd,lwd,logit,total,train_miou\n";
    for (const auto& e : r.epochs) {
      out << e.epoch << ',' << e.wce << ',' << e.lovasz << ',' << e.vpd << ',' << e.lwd << ',' << e.logit << ','
          << e.total << ',' << e.train_miou << '\n';
    }
  }
  {
    auto out = open(out_dir / "steps.csv");
    out << "epoch,step,wce,lovasz,vpd,lwd,logit,total\n";
    for (const auto& s : r.steps) {
      out << s.epoch << ',' << s.step << ',' << s.wce << ',' << s.lovasz << ',' << s.vpd << ',' << s.lwd << ','
          << s.logit << ',' << s.total << '\n';
    }
  }
  if (!r.alignment.empty()) {
    auto out = open(out_dir / "alignment.csv");
    out << "epoch,mean_row_cosine\n";
    for (std::size_t e = 0; e < r.alignment.size(); ++e) out << e << ',' << r.alignment[e] << '\n';
  }
}

LoadedModel load_model(const Checkpoint& ckpt) {
  LoadedModel m;
  m.kind = ckpt.kind;
  m.cfg = config_from_json(ckpt.config);
  if (ckpt.kind == "teacher") {
    m.teacher = TeacherModel::create(m.cfg, m.cfg.seed);
    assign_parameters(m.teacher->params, ckpt.params);
  } else if (ckpt.kind == "student") {
    m.student = StudentModel::create(m.cfg, m.cfg.seed);
    assign_parameters(m.student->params, ckpt.params);
  } else {
    throw ValidationError("unknown checkpoint kind '" + ckpt.kind + "'");
  }
  return m;
}

std::vector<Label> predict(const LoadedModel& model, const PreparedScene& scene) {
  Tape tape;
  if (model.teacher) {
    auto b = Binding::frozen(tape, model.teacher->params);
    auto out = model.teacher->net.forward(b, tape.constant(scene.voxels.feats));
    return argmax_rows(gather_rows(out.logits, scene.point_voxel).value());
  }
  auto b = Binding::frozen(tape, model.student->params);
  auto out = model.student->net.forward(b, tape.constant(scene.bev.feats));
  return argmax_rows(gather_rows(out.logits, scene.point_pillar).value());
}

EvalReport evaluate(const LoadedModel& model, std::span<const Scene> scenes) {
  if (scenes.empty()) throw ValidationError("evaluate: empty dataset");
  ConfusionMatrix cm(model.cfg.num_classes);
  for (const auto& s : scenes) {
    const PreparedScene p = prepare_scene(s.cloud, s.labels, model.cfg);
    cm.accumulate(predict(model, p), p.targets, model.cfg.ignore_id);
  }
  EvalReport r;
  r.miou = miou(cm);
  r.points = cm.total();
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) correct += cm.at(c, c);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.points);
  r.class_names = model.cfg.class_names;
  return r;
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_miou_csv(out_dir / "miou.csv", report.miou, report.class_names);
}

void write_map_csv(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                   std::span<const std::uint32_t> values) {
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path.string());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out << (c ? "," : "") << values[r * cols + c];
    out << '\n';
  }
  if (!out) throw RuntimeError("failed writing " + path.string());
}

void write_map_pgm(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                   std::span<const std::uint32_t> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  const std::uint32_t top = values.empty() ? 0 : *std::max_element(values.begin(), values.end());
  for (std::uint32_t v : values) {
    const auto px = top == 0 ? 0 : static_cast<unsigned>((static_cast<std::uint64_t>(v) * 255 + top / 2) / top);
    out.put(static_cast<char>(px));
  }
  if (!out) throw RuntimeError("failed writing " + path.string());
}

MapExport export_maps(const TrainConfig& cfg, const PointCloud& cloud, const LabelSet* labels,
                      const LoadedModel* model, const std::filesystem::path& out_dir) {
  try {
    std::filesystem::create_directories(out_dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw RuntimeError(std::string("export-maps: ") + e.what());
  }
  MapExport ex;
  const SparseVoxelGrid grid = voxelize(cloud, cfg.grid);
  ex.height = height_map(grid);
  const std::size_t rows = cfg.grid.rho_bins, cols = cfg.grid.theta_bins;
  write_map_csv(out_dir / "height_map.csv", rows, cols, ex.height.values);
  write_map_pgm(out_dir / "height_map.pgm", rows, cols, ex.height.values);
  if (labels != nullptr && model != nullptr) {
    if (!(model->cfg.grid == cfg.grid)) throw ValidationError("export-maps: checkpoint grid differs from config grid");
    const PreparedScene scene = prepare_scene(cloud, *labels, model->cfg);
    const auto pred = predict(*model, scene);
    std::vector<std::uint32_t> errors(cfg.grid.num_pillars(), 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (scene.targets[i] == cfg.ignore_id || pred[i] == scene.targets[i]) continue;
      ++errors[static_cast<std::size_t>(scene.point_pillar[i])];
    }
    write_map_csv(out_dir / "error_map.csv", rows, cols, errors);
    write_map_pgm(out_dir / "error_map.pgm", rows, cols, errors);
    ex.errors = std::move(errors);
  }
  return ex;
}

}  // namespace bevkd
