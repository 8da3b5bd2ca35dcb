// SPDX-License-Identifier: Apache-2.0
//
// Pipeline configuration keys (flat `key = value` file):
//
//   pipeline.name, pipeline.seeds (comma list), pipeline.out_dir,
//   pipeline.beam_size, pipeline.stages (count)
//   data.source = toy | manifest
//     toy:      data.toy.{vocab_size,train_utterances,dev_utterances,label_len_min,label_len_max,
//                         frames_per_label,noise_std,synthesizer_seed,feature_dim,train_seed,dev_seed}
//               data.eval_sets = a,b ; data.toy.eval.<set>.{utterances,seed}
//     manifest: data.train_manifest, data.dev_manifest, data.eval_sets, data.eval.<set>.manifest
//   train.* distill.* schedule.* adam.* augment.*   defaults for every training run
//   teacher.checkpoint                               use an existing original teacher, or
//   teacher.model.* teacher.train.* ...              train it (overrides on the defaults)
//   stage<N>.teacher_source = original | previous_stage | <checkpoint path>
//   stage<N>.model.*                                 student model (overrides on the teacher's)
//   stage<N>.baseline, stage<N>.from_original        extra models (default true)
//   stage<N>.train.* stage<N>.distill.* ...          per-stage training overrides
//   report.teacher_index_start, report.baseline_index_start, report.student_index_start
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctkd/common/keyvalue.hpp"
#include "ctkd/frontend/features.hpp"
#include "ctkd/frontend/toy_corpus.hpp"
#include "ctkd/train/trainer.hpp"

namespace ctkd::pipeline {

struct TeacherSource {
  enum class Kind { original, previous_stage, path } kind = Kind::original;
  std::string path;
};

struct StageConfig {
  std::size_t stage_id = 1;
  TeacherSource teacher_source;
  train::TrainConfig train;  // student; mode forced to distill
  bool also_train_scratch_baseline = true;
  bool also_train_from_original_teacher = true;
};

struct EvalSetConfig {
  std::string name;
  std::string manifest;     // manifest source
  std::size_t utterances = 0;  // toy source
  std::uint64_t seed = 0;
};

struct DataConfig {
  enum class Source { toy, manifest } source = Source::toy;
  frontend::ToyCorpusSpec toy;
  std::size_t train_utterances = 2000;
  std::uint64_t train_seed = 11;
  std::size_t dev_utterances = 0;
  std::uint64_t dev_seed = 13;
  std::string train_manifest, dev_manifest;
  std::vector<EvalSetConfig> eval_sets;

  /// Reads the `data.*` keys.
  static DataConfig from_keyvalues(const KeyValues& kv);
};

struct LoadedData {
  frontend::Dataset train, dev;
  std::vector<std::pair<std::string, frontend::Dataset>> eval_sets;
};

LoadedData load_data(const DataConfig& config);

struct ReportNaming {
  std::size_t teacher_index_start = 2;  // first promoted teacher (T1 is the original)
  std::size_t baseline_index_start = 1;
  std::size_t student_index_start = 1;
};

struct PipelineConfig {
  std::string name = "pipeline";
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "pipeline_out";
  std::size_t beam_size = 8;
  DataConfig data;
  std::optional<std::string> original_teacher_checkpoint;
  train::TrainConfig teacher;  // used when no checkpoint is given
  std::vector<StageConfig> stages;
  ReportNaming naming;

  /// Structural checks: at least one stage, stage 1 does not use the previous
  /// stage, and student parameter counts strictly decrease.
  void validate() const;

  /// Parses and validates; unknown keys are rejected with ConfigError naming
  /// the key.
  static PipelineConfig from_keyvalues(const KeyValues& kv);
};

}  // namespace ctkd::pipeline
