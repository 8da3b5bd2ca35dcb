// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctkd/model/checkpoint.hpp"
#include "ctkd/pipeline/pipeline_config.hpp"
#include "ctkd/pipeline/report.hpp"

namespace ctkd::pipeline {

/// Stage n's teacher file against the stage n-1 student file it was promoted from.
struct PromotionCheck {
  std::uint64_t seed = 0;
  std::size_t stage_id = 0;
  std::string student_checkpoint, teacher_checkpoint;
  std::string student_digest, teacher_digest;
  bool identical = false;
};

/// Progressive student against the directly distilled student of one stage.
struct StageComparison {
  std::size_t stage_id = 0;
  std::string set;
  std::string progressive_role, direct_role, baseline_role;
  MeanStd progressive_wer, direct_wer, baseline_wer;
  bool has_baseline = false;
};

struct PipelineResult {
  std::vector<StageReport> reports;
  std::vector<AggregateRow> rows;
  std::vector<PromotionCheck> promotions;
  std::vector<StageComparison> comparisons;
  bool failed = false;
  std::string failure;
  std::string table;  // text table followed by the comparison block
  std::string tsv;
};

struct PipelineOptions {
  std::ostream* log = nullptr;
  /// Original teacher supplied in memory; skips teacher loading/training.
  const model::Checkpoint* teacher = nullptr;
};

/// Everything a stage needs from the pipeline for one seed.
struct StageContext {
  const PipelineConfig* config = nullptr;
  const LoadedData* data = nullptr;
  const model::Checkpoint* original_teacher = nullptr;
  std::string original_teacher_path;
  std::vector<SetMetrics> original_teacher_metrics;
  std::uint64_t seed = 0;
  std::string seed_dir;
  /// Student of the previous stage distilled from that stage's teacher.
  std::string previous_student_path;
  std::optional<StageReport> previous_student;
  std::ostream* log = nullptr;
  std::vector<PromotionCheck>* promotions = nullptr;
};

/// Distils the stage student from its resolved teacher and, when flagged,
/// trains the scratch baseline and a student distilled from the original
/// teacher. Returns the stage's reports, teacher row first, and updates the
/// context's previous-stage fields.
std::vector<StageReport> run_stage(const StageConfig& stage, StageContext& context);

/// Obtains the original teacher, runs every stage for every seed, and writes
/// report.txt, report.tsv, runs.tsv and promotion.tsv under the output directory.
PipelineResult run_pipeline(const PipelineConfig& config, const PipelineOptions& options = {});

/// Evaluates one model on every evaluation set with the pipeline's beam.
std::vector<SetMetrics> evaluate_sets(const model::ConformerTransducer& model, const LoadedData& data,
                                      std::size_t beam_size);

/// Role names in row order for each stage: teacher, baseline, from-original, student.
struct StageRoles {
  std::string teacher, baseline, from_original, student;
};
std::vector<StageRoles> assign_roles(const PipelineConfig& config);

}  // namespace ctkd::pipeline
