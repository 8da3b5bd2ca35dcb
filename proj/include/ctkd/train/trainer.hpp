// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ctkd/common/keyvalue.hpp"
#include "ctkd/distill/kd_loss.hpp"
#include "ctkd/frontend/features.hpp"
#include "ctkd/frontend/spec_augment.hpp"
#include "ctkd/model/checkpoint.hpp"
#include "ctkd/model/config.hpp"
#include "ctkd/train/optimizer.hpp"
#include "ctkd/train/schedule.hpp"

namespace ctkd::train {

enum class TrainMode { scratch, distill };

struct TrainConfig {
  TrainMode mode = TrainMode::scratch;
  std::optional<std::string> teacher_checkpoint;
  model::ModelConfig model;
  distill::DistillationConfig distill;
  ScheduleConfig schedule{1e-4, 500, 2000};
  AdamConfig adam;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::uint64_t seed = 1;
  frontend::AugmentPolicy augment;
  /// Decoding used for the per-epoch dev score; 1 = greedy.
  std::size_t dev_beam_size = 1;
  std::size_t max_symbols_per_frame = 10;

  void validate() const;

  /// Keys: <prefix>train.{mode,teacher_checkpoint,batch_size,epochs,seed,dev_beam_size,max_symbols_per_frame},
  /// <prefix>distill.{alpha,temperature}, <prefix>schedule.*, <prefix>adam.*, <prefix>augment.*,
  /// <prefix>model.*. Missing keys keep the values in `base`.
  static TrainConfig from_keyvalues(const KeyValues& kv, const std::string& prefix, const TrainConfig& base);
  static TrainConfig from_keyvalues(const KeyValues& kv, const std::string& prefix = "");
  void to_keyvalues(KeyValues& kv, const std::string& prefix = "") const;
};

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& text);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_transducer_loss = 0.0;
  double train_kd_loss = 0.0;
  double dev_wer = 0.0;  // NaN without a dev set
  double dev_ser = 0.0;
};

/// Tab-separated header and rows of the metric log.
std::string metrics_header();
std::string metrics_row(const EpochMetrics& m);

struct TrainOptions {
  /// When set: metrics.tsv and checkpoint.ckpt (last good state) are written here.
  std::string out_dir;
  const frontend::Dataset* dev = nullptr;
  /// Teacher supplied in memory instead of through teacher_checkpoint.
  const model::Checkpoint* teacher = nullptr;
  /// Progress lines go here when set.
  std::ostream* log = nullptr;
  /// Records a digest of all parameter values after every update.
  bool record_step_digests = false;
};

struct TrainResult {
  model::Checkpoint checkpoint;  // final, or last good state after divergence
  std::vector<EpochMetrics> epochs;
  bool diverged = false;
  std::string diagnostic;
  std::vector<std::uint64_t> step_digests;
};

/// Scratch mode minimises the transducer loss; distill mode minimises
/// (1-alpha) * transducer + alpha * KD against a frozen teacher in eval mode.
/// The batch loss is the mean over its utterances. Deterministic for a given
/// config, dataset and seed.
TrainResult run_training(const TrainConfig& config, const frontend::Dataset& train, const TrainOptions& options = {});

/// FNV-1a over the bit patterns of every parameter value.
std::uint64_t parameter_digest(const model::NamedTensors& params);

}  // namespace ctkd::train
