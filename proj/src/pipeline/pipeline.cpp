// SPDX-License-Identifier: Apache-2.0
#include "ctkd/pipeline/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "ctkd/common/errors.hpp"
#include "ctkd/eval/decode.hpp"
#include "ctkd/model/config.hpp"

namespace ctkd::pipeline {
namespace fs = std::filesystem;
namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Trained {
  model::Checkpoint checkpoint;
  std::string path;
};

Trained train_model(const train::TrainConfig& cfg, const LoadedData& data, const std::string& dir,
                    const model::Checkpoint* teacher, std::ostream* log, const std::string& label) {
  if (log) *log << "== training " << label << " (" << train::to_string(cfg.mode) << ", seed " << cfg.seed << ")\n";
  train::TrainOptions opt;
  opt.out_dir = dir;
  opt.dev = data.dev.empty() ? nullptr : &data.dev;
  opt.teacher = teacher;
  opt.log = log;
  train::TrainResult r = train::run_training(cfg, data.train, opt);
  if (r.diverged) throw NumericError(label + " diverged: " + r.diagnostic);
  Trained t{std::move(r.checkpoint), dir + "/checkpoint.ckpt"};
  model::save_checkpoint(t.checkpoint, t.path);
  // Values as stored, so later stages see exactly the file contents.
  t.checkpoint = model::load_checkpoint(t.path);
  return t;
}

}  // namespace

std::vector<SetMetrics> evaluate_sets(const model::ConformerTransducer& model, const LoadedData& data,
                                      std::size_t beam_size) {
  std::vector<SetMetrics> out;
  eval::DecodeOptions opt;
  opt.beam_size = beam_size;
  for (const auto& [name, set] : data.eval_sets) {
    const auto ev = eval::evaluate_dataset(model, set, opt);
    out.push_back({name, ev.score.wer_percent, ev.score.ser_percent});
  }
  return out;
}

std::vector<StageRoles> assign_roles(const PipelineConfig& config) {
  std::vector<StageRoles> roles;
  std::size_t t = config.naming.teacher_index_start;
  std::size_t s = config.naming.student_index_start;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& st = config.stages[i];
    StageRoles r;
    r.teacher = i == 0 && st.teacher_source.kind == TeacherSource::Kind::original ? "T1" : "T" + std::to_string(t++);
    // One baseline slot per stage, so skipped baselines keep later names stable.
    if (st.also_train_scratch_baseline) r.baseline = "B" + std::to_string(config.naming.baseline_index_start + i);
    const bool teacher_is_original = st.teacher_source.kind == TeacherSource::Kind::original;
    if (st.also_train_from_original_teacher && !teacher_is_original) r.from_original = "S" + std::to_string(s++);
    r.student = "S" + std::to_string(s++);
    roles.push_back(r);
  }
  return roles;
}

std::vector<StageReport> run_stage(const StageConfig& stage, StageContext& ctx) {
  const PipelineConfig& cfg = *ctx.config;
  const auto roles = assign_roles(cfg);
  const StageRoles& role = roles.at(stage.stage_id - 1);
  const std::string stage_dir = ctx.seed_dir + "/stage" + std::to_string(stage.stage_id);
  fs::create_directories(stage_dir);
  const std::uint64_t original_params = model::count_parameters(ctx.original_teacher->config).total();

  // Resolve the stage teacher.
  model::Checkpoint stage_teacher;
  std::string teacher_path;
  StageReport teacher_row;
  teacher_row.stage_id = stage.stage_id;
  teacher_row.role = role.teacher;
  teacher_row.kind = ModelKind::teacher;
  teacher_row.seed = ctx.seed;
  switch (stage.teacher_source.kind) {
    case TeacherSource::Kind::original:
      stage_teacher = *ctx.original_teacher;
      teacher_path = ctx.original_teacher_path;
      teacher_row.params = original_params;
      teacher_row.metrics = ctx.original_teacher_metrics;
      teacher_row.checkpoint = teacher_path;
      if (role.teacher != "T1") teacher_row.description = "T1";
      break;
    case TeacherSource::Kind::previous_stage: {
      if (ctx.previous_student_path.empty() || !ctx.previous_student) {
        throw ConfigError("stage " + std::to_string(stage.stage_id) + " has no previous stage to take a teacher from",
                          "stage" + std::to_string(stage.stage_id) + ".teacher_source");
      }
      stage_teacher = model::load_checkpoint(ctx.previous_student_path);
      teacher_path = stage_dir + "/teacher.ckpt";
      model::save_checkpoint(stage_teacher, teacher_path);
      PromotionCheck check;
      check.seed = ctx.seed;
      check.stage_id = stage.stage_id;
      check.student_checkpoint = ctx.previous_student_path;
      check.teacher_checkpoint = teacher_path;
      check.student_digest = model::file_digest(ctx.previous_student_path);
      check.teacher_digest = model::file_digest(teacher_path);
      check.identical = check.student_digest == check.teacher_digest;
      if (ctx.promotions) ctx.promotions->push_back(check);
      if (!check.identical) {
        throw IntegrityError("stage " + std::to_string(stage.stage_id) + " teacher differs from the promoted student");
      }
      const StageReport& prev = *ctx.previous_student;
      teacher_row.description = "= " + prev.role;
      teacher_row.params = prev.params;
      teacher_row.comp_teacher = prev.comp_teacher;
      teacher_row.comp_original = prev.comp_original;
      teacher_row.metrics = prev.metrics;
      teacher_row.checkpoint = teacher_path;
      break;
    }
    case TeacherSource::Kind::path:
      stage_teacher = model::load_checkpoint(stage.teacher_source.path);
      teacher_path = stage.teacher_source.path;
      teacher_row.params = model::count_parameters(stage_teacher.config).total();
      teacher_row.comp_original = compression_percent(original_params, teacher_row.params);
      teacher_row.metrics = evaluate_sets(stage_teacher.instantiate(), *ctx.data, cfg.beam_size);
      teacher_row.checkpoint = teacher_path;
      teacher_row.description = "external";
      break;
  }
  const std::uint64_t teacher_params = model::count_parameters(stage_teacher.config).total();
  const std::uint64_t student_params = model::count_parameters(stage.train.model).total();
  if (student_params >= teacher_params) {
    throw ConfigError("stage " + std::to_string(stage.stage_id) + " student (" + std::to_string(student_params) +
                          " parameters) is not smaller than its teacher (" + std::to_string(teacher_params) + ")",
                      "stage" + std::to_string(stage.stage_id) + ".model");
  }

  std::vector<StageReport> out{teacher_row};
  train::TrainConfig tc = stage.train;
  tc.seed = ctx.seed;
  tc.teacher_checkpoint.reset();

  auto report = [&](const Trained& m, const std::string& name, ModelKind kind, const std::string& description,
                    std::optional<std::uint64_t> teacher_count) {
    StageReport r;
    r.stage_id = stage.stage_id;
    r.role = name;
    r.kind = kind;
    r.description = description;
    r.params = student_params;
    if (teacher_count) r.comp_teacher = compression_percent(*teacher_count, student_params);
    r.comp_original = compression_percent(original_params, student_params);
    r.metrics = evaluate_sets(m.checkpoint.instantiate(), *ctx.data, cfg.beam_size);
    r.seed = ctx.seed;
    r.checkpoint = m.path;
    if (ctx.log) {
      *ctx.log << "   " << name;
      for (const auto& s : r.metrics) *ctx.log << "  " << s.set << " WER " << fixed2(s.wer) << " SER " << fixed2(s.ser);
      *ctx.log << '\n';
    }
    return r;
  };

  if (!role.baseline.empty()) {
    train::TrainConfig bc = tc;
    bc.mode = train::TrainMode::scratch;
    Trained b = train_model(bc, *ctx.data, stage_dir + "/" + role.baseline, nullptr, ctx.log, role.baseline);
    out.push_back(report(b, role.baseline, ModelKind::baseline, "", std::nullopt));
  }
  if (!role.from_original.empty()) {
    Trained s = train_model(tc, *ctx.data, stage_dir + "/" + role.from_original, ctx.original_teacher, ctx.log,
                            role.from_original);
    out.push_back(report(s, role.from_original, ModelKind::student_from_original, "Student from T1", original_params));
  }
  Trained s = train_model(tc, *ctx.data, stage_dir + "/" + role.student, &stage_teacher, ctx.log, role.student);
  out.push_back(report(s, role.student, ModelKind::student, "Student from " + role.teacher, teacher_params));

  ctx.previous_student_path = s.path;
  ctx.previous_student = out.back();
  return out;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineOptions& options) {
  cfg.validate();
  PipelineResult result;
  fs::create_directories(cfg.out_dir);
  std::ostream* log = options.log;
  const LoadedData data = load_data(cfg.data);
  if (log) *log << "data: " << data.train.size() << " train, " << data.dev.size() << " dev utterances\n";

  // Original teacher.
  model::Checkpoint teacher;
  std::string teacher_path;
  if (options.teacher) {
    teacher = *options.teacher;
    teacher_path = cfg.out_dir + "/teacher/checkpoint.ckpt";
    model::save_checkpoint(teacher, teacher_path);
  } else if (cfg.original_teacher_checkpoint) {
    teacher_path = *cfg.original_teacher_checkpoint;
    teacher = model::load_checkpoint(teacher_path);
  } else {
    Trained t = train_model(cfg.teacher, data, cfg.out_dir + "/teacher", nullptr, log, "T1");
    teacher = std::move(t.checkpoint);
    teacher_path = t.path;
  }
  for (const auto& st : cfg.stages) {
    if (st.train.model.vocab_size != teacher.config.vocab_size) {
      throw ConfigError("stage " + std::to_string(st.stage_id) + " vocab_size differs from the teacher's",
                        "stage" + std::to_string(st.stage_id) + ".model.vocab_size");
    }
  }
  const auto teacher_metrics = evaluate_sets(teacher.instantiate(), data, cfg.beam_size);

  try {
    for (std::uint64_t seed : cfg.seeds) {
      StageContext ctx;
      ctx.config = &cfg;
      ctx.data = &data;
      ctx.original_teacher = &teacher;
      ctx.original_teacher_path = teacher_path;
      ctx.original_teacher_metrics = teacher_metrics;
      ctx.seed = seed;
      ctx.seed_dir = cfg.out_dir + "/seed" + std::to_string(seed);
      ctx.log = log;
      ctx.promotions = &result.promotions;
      for (const auto& st : cfg.stages) {
        auto reports = run_stage(st, ctx);
        result.reports.insert(result.reports.end(), reports.begin(), reports.end());
      }
    }
  } catch (const std::exception& e) {
    result.failed = true;
    result.failure = e.what();
    if (log) *log << "pipeline failed: " << e.what() << '\n';
  }

  // Rows in stage order regardless of seed order.
  std::vector<StageReport> ordered;
  for (const auto& st : cfg.stages) {
    for (const auto& r : result.reports) {
      if (r.stage_id == st.stage_id) ordered.push_back(r);
    }
  }
  result.rows = aggregate(ordered);

  // Progressive vs direct comparisons.
  const auto roles = assign_roles(cfg);
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    if (roles[i].from_original.empty()) continue;
    const AggregateRow *prog = nullptr, *direct = nullptr, *base = nullptr;
    for (const auto& r : result.rows) {
      if (r.stage_id != cfg.stages[i].stage_id) continue;
      if (r.role == roles[i].student) prog = &r;
      if (r.role == roles[i].from_original) direct = &r;
      if (r.role == roles[i].baseline) base = &r;
    }
    if (!prog || !direct) continue;
    for (std::size_t s = 0; s < prog->sets.size(); ++s) {
      StageComparison c;
      c.stage_id = cfg.stages[i].stage_id;
      c.set = prog->sets[s];
      c.progressive_role = prog->role;
      c.direct_role = direct->role;
      c.progressive_wer = prog->wer[s];
      c.direct_wer = direct->wer[s];
      if (base) {
        c.has_baseline = true;
        c.baseline_role = base->role;
        c.baseline_wer = base->wer[s];
      }
      result.comparisons.push_back(c);
    }
  }

  std::ostringstream text;
  text << render_table(result.rows, cfg.name + " (" + std::to_string(cfg.seeds.size()) + " seed" +
                                        (cfg.seeds.size() == 1 ? "" : "s") + ", mean ± stdev)");
  if (!result.comparisons.empty()) {
    text << "\nprogressive vs direct distillation (mean WER)\n";
    for (const auto& c : result.comparisons) {
      text << "stage " << c.stage_id << " " << c.set << ": " << c.progressive_role << " (progressive) "
           << fixed2(c.progressive_wer.mean) << " vs " << c.direct_role << " (direct) " << fixed2(c.direct_wer.mean);
      if (c.has_baseline) text << " vs " << c.baseline_role << " (scratch) " << fixed2(c.baseline_wer.mean);
      text << " -> "
           << (c.progressive_wer.mean < c.direct_wer.mean
                   ? "progressive better"
                   : (c.progressive_wer.mean > c.direct_wer.mean ? "direct better" : "tie"))
           << '\n';
    }
  }
  if (!result.promotions.empty()) {
    bool all = true;
    for (const auto& p : result.promotions) all = all && p.identical;
    text << "\npromotion identity: " << result.promotions.size() << " checks, "
         << (all ? "all identical" : "MISMATCH") << '\n';
  }
  if (result.failed) text << "\nFAILED (partial results): " << result.failure << '\n';
  result.table = text.str();
  result.tsv = render_tsv(result.rows);

  write_file(cfg.out_dir + "/report.txt", result.table);
  write_file(cfg.out_dir + "/report.tsv", result.tsv);
  write_file(cfg.out_dir + "/runs.tsv", render_runs_tsv(result.reports));
  std::ostringstream promo;
  promo << "seed\tstage\tstudent_checkpoint\tteacher_checkpoint\tstudent_digest\tteacher_digest\tidentical\n";
  for (const auto& p : result.promotions) {
    promo << p.seed << '\t' << p.stage_id << '\t' << p.student_checkpoint << '\t' << p.teacher_checkpoint << '\t'
          << p.student_digest << '\t' << p.teacher_digest << '\t' << (p.identical ? "yes" : "no") << '\n';
  }
  write_file(cfg.out_dir + "/promotion.tsv", promo.str());
  return result;
}

}  // namespace ctkd::pipeline
