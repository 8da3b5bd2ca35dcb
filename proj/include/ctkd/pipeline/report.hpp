// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctkd/pipeline/compression.hpp"

namespace ctkd::pipeline {

enum class ModelKind { teacher, baseline, student, student_from_original };

struct SetMetrics {
  std::string set;
  double wer = 0.0;
  double ser = 0.0;
};

/// One model of one stage for one seed.
struct StageReport {
  std::size_t stage_id = 0;
  std::string role;         // T1, B2, S3, ...
  std::string description;  // e.g. "Student from T1", "T2 = S1"
  ModelKind kind = ModelKind::student;
  std::uint64_t params = 0;
  std::optional<CompressionPercent> comp_teacher;   // w.r.t. the stage teacher
  std::optional<CompressionPercent> comp_original;  // w.r.t. T1
  std::vector<SetMetrics> metrics;
  std::uint64_t seed = 0;
  std::string checkpoint;
};

struct MeanStd {
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_stdev(const std::vector<double>& values);

/// Reports of every seed merged per (stage, role), in first-seen order.
struct AggregateRow {
  std::size_t stage_id = 0;
  std::string role;
  std::string description;
  ModelKind kind = ModelKind::student;
  std::uint64_t params = 0;
  std::optional<CompressionPercent> comp_teacher;
  std::optional<CompressionPercent> comp_original;
  std::vector<std::string> sets;
  std::vector<MeanStd> wer, ser;  // parallel to sets
  std::size_t seeds = 0;
};

std::vector<AggregateRow> aggregate(const std::vector<StageReport>& reports);

/// Aligned text table: Stage | Model | Params | %Comp teacher | %Comp T1 | per-set WER, SER.
std::string render_table(const std::vector<AggregateRow>& rows, const std::string& title);
std::string render_tsv(const std::vector<AggregateRow>& rows);
/// Per-seed rows.
std::string render_runs_tsv(const std::vector<StageReport>& reports);

}  // namespace ctkd::pipeline
