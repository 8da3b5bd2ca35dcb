// SPDX-License-Identifier: Apache-2.0
#include "ctkd/train/trainer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "ctkd/common/errors.hpp"
#include "ctkd/diffcore/ops.hpp"
#include "ctkd/eval/decode.hpp"
#include "ctkd/train/loss_nodes.hpp"

namespace ctkd::train {
namespace {

using ad::Tensor;

std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError(key + " must be non-negative", key);
  return static_cast<std::size_t>(v);
}

bool is_identity(const frontend::AugmentPolicy& p) {
  return (p.freq_masks == 0 || p.freq_mask_width_max == 0) && (p.time_masks == 0 || p.time_mask_width_max == 0);
}

struct UtteranceLoss {
  double total = 0.0, transducer = 0.0, kd = 0.0;
};

std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

std::string to_string(TrainMode mode) { return mode == TrainMode::scratch ? "scratch" : "distill"; }

TrainMode parse_train_mode(const std::string& text) {
  if (text == "scratch") return TrainMode::scratch;
  if (text == "distill") return TrainMode::distill;
  throw ConfigError("train.mode must be 'scratch' or 'distill', got '" + text + "'", "train.mode");
}

void TrainConfig::validate() const {
  model.validate();
  distill.validate();
  schedule.validate();
  adam.validate();
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive", "train.batch_size");
  if (dev_beam_size == 0) throw ConfigError("train.dev_beam_size must be positive", "train.dev_beam_size");
  if (max_symbols_per_frame == 0) {
    throw ConfigError("train.max_symbols_per_frame must be positive", "train.max_symbols_per_frame");
  }
}

TrainConfig TrainConfig::from_keyvalues(const KeyValues& kv, const std::string& p, const TrainConfig& base) {
  TrainConfig c = base;
  if (kv.has(p + "train.mode")) c.mode = parse_train_mode(kv.get_string(p + "train.mode"));
  if (kv.has(p + "train.teacher_checkpoint")) {
    const auto path = kv.get_string(p + "train.teacher_checkpoint");
    c.teacher_checkpoint = path.empty() ? std::nullopt : std::optional<std::string>(path);
  }
  c.batch_size = get_size(kv, p + "train.batch_size", c.batch_size);
  c.epochs = get_size(kv, p + "train.epochs", c.epochs);
  c.seed = static_cast<std::uint64_t>(kv.get_int(p + "train.seed", static_cast<std::int64_t>(c.seed)));
  c.dev_beam_size = get_size(kv, p + "train.dev_beam_size", c.dev_beam_size);
  c.max_symbols_per_frame = get_size(kv, p + "train.max_symbols_per_frame", c.max_symbols_per_frame);
  c.distill.alpha = kv.get_double(p + "distill.alpha", c.distill.alpha);
  c.distill.temperature = kv.get_double(p + "distill.temperature", c.distill.temperature);
  c.schedule = ScheduleConfig::from_keyvalues(kv, p + "schedule.", c.schedule);
  c.adam = AdamConfig::from_keyvalues(kv, p + "adam.", c.adam);
  c.augment.freq_mask_width_max = get_size(kv, p + "augment.freq_mask_width_max", c.augment.freq_mask_width_max);
  c.augment.freq_masks = get_size(kv, p + "augment.freq_masks", c.augment.freq_masks);
  c.augment.time_mask_width_max = get_size(kv, p + "augment.time_mask_width_max", c.augment.time_mask_width_max);
  c.augment.time_masks = get_size(kv, p + "augment.time_masks", c.augment.time_masks);
  c.model = model::ModelConfig::from_keyvalues(kv, p + "model.", c.model);
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_keyvalues(const KeyValues& kv, const std::string& prefix) {
  return from_keyvalues(kv, prefix, TrainConfig{});
}

void TrainConfig::to_keyvalues(KeyValues& kv, const std::string& p) const {
  kv.set(p + "train.mode", to_string(mode));
  if (teacher_checkpoint) kv.set(p + "train.teacher_checkpoint", *teacher_checkpoint);
  kv.set(p + "train.batch_size", std::to_string(batch_size));
  kv.set(p + "train.epochs", std::to_string(epochs));
  kv.set(p + "train.seed", std::to_string(seed));
  kv.set(p + "train.dev_beam_size", std::to_string(dev_beam_size));
  kv.set(p + "train.max_symbols_per_frame", std::to_string(max_symbols_per_frame));
  kv.set(p + "distill.alpha", format_double(distill.alpha));
  kv.set(p + "distill.temperature", format_double(distill.temperature));
  kv.set(p + "schedule.base_lr", format_double(schedule.base_lr));
  kv.set(p + "schedule.warmup", format_double(schedule.warmup));
  kv.set(p + "schedule.decay_steps", format_double(schedule.decay_steps));
  kv.set(p + "adam.beta1", format_double(adam.beta1));
  kv.set(p + "adam.beta2", format_double(adam.beta2));
  kv.set(p + "adam.epsilon", format_double(adam.epsilon));
  kv.set(p + "adam.clip_norm", format_double(adam.clip_norm));
  kv.set(p + "augment.freq_mask_width_max", std::to_string(augment.freq_mask_width_max));
  kv.set(p + "augment.freq_masks", std::to_string(augment.freq_masks));
  kv.set(p + "augment.time_mask_width_max", std::to_string(augment.time_mask_width_max));
  kv.set(p + "augment.time_masks", std::to_string(augment.time_masks));
  model.to_keyvalues(kv, p + "model.");
}

std::string metrics_header() {
  return "epoch\tstep\tlr\ttrain_loss\ttrain_transducer_loss\ttrain_kd_loss\tdev_wer\tdev_ser";
}

std::string metrics_row(const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%llu\t%.6e\t%.6f\t%.6f\t%.6f\t%.2f\t%.2f", m.epoch,
                static_cast<unsigned long long>(m.step), m.lr, m.train_loss, m.train_transducer_loss,
                m.train_kd_loss, m.dev_wer, m.dev_ser);
  return buf;
}

std::uint64_t parameter_digest(const model::NamedTensors& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : params) {
    for (double v : t.data()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

TrainResult run_training(const TrainConfig& cfg, const frontend::Dataset& train, const TrainOptions& options) {
  cfg.validate();
  if (train.empty()) throw InputError("training set is empty");
  for (const auto& u : train) {
    if (u.features.dims != cfg.model.feature_dim) {
      throw InputError("utterance " + u.id + " has " + std::to_string(u.features.dims) +
                       "-dim features, model expects " + std::to_string(cfg.model.feature_dim));
    }
    for (Token y : u.labels) {
      if (y < 1 || static_cast<std::size_t>(y) > cfg.model.vocab_size) {
        throw InputError("utterance " + u.id + " has label " + std::to_string(y) + " outside [1," +
                         std::to_string(cfg.model.vocab_size) + "]");
      }
    }
  }

  const bool distilling = cfg.mode == TrainMode::distill;
  std::optional<model::ConformerTransducer> teacher;
  if (distilling) {
    model::Checkpoint loaded;
    const model::Checkpoint* source = options.teacher;
    if (!source) {
      if (!cfg.teacher_checkpoint) {
        throw ConfigError("distill mode requires train.teacher_checkpoint", "train.teacher_checkpoint");
      }
      loaded = model::load_checkpoint(*cfg.teacher_checkpoint);
      source = &loaded;
    }
    if (source->config.vocab_size != cfg.model.vocab_size) {
      throw ConfigError("teacher vocab_size " + std::to_string(source->config.vocab_size) +
                            " differs from student vocab_size " + std::to_string(cfg.model.vocab_size),
                        "model.vocab_size");
    }
    if (source->config.feature_dim != cfg.model.feature_dim) {
      throw ConfigError("teacher feature_dim differs from student feature_dim", "model.feature_dim");
    }
    teacher.emplace(source->instantiate());
  }

  std::mt19937_64 rng(cfg.seed);
  model::ConformerTransducer student(cfg.model, rng());
  const auto& params = student.parameters();
  TrainState state;
  TrainResult result;

  auto make_checkpoint = [&](const model::NamedTensors& values, std::size_t epochs_done) {
    model::Checkpoint ck;
    ck.config = cfg.model;
    ck.parameters = values;
    ck.step = state.step;
    ck.rng_state = rng_text(rng);
    KeyValues kv;
    cfg.to_keyvalues(kv, "");
    for (const auto& [k, v] : kv.entries()) {
      if (k.rfind("model.", 0) == 0) continue;
      ck.metadata[k] = v;
    }
    ck.metadata["epochs_completed"] = std::to_string(epochs_done);
    return ck;
  };

  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);
  std::ofstream metrics_file;
  if (!options.out_dir.empty()) {
    metrics_file.open(options.out_dir + "/metrics.tsv", std::ios::trunc);
    metrics_file << metrics_header() << '\n';
  }

  model::NamedTensors last_good = student.snapshot();
  std::size_t last_good_epoch = 0;
  std::vector<std::vector<double>> grads(params.size());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const double tau = cfg.distill.temperature;
  const double alpha = cfg.distill.alpha;

  // Forward + backward of one utterance; adds gradients into `grads`.
  auto utterance_step = [&](const frontend::Utterance& u) {
    frontend::FeatureMatrix feats =
        is_identity(cfg.augment) ? u.features : frontend::spec_augment(u.features, cfg.augment, rng);
    ad::Tape tape(rng());
    const std::size_t T = student.encoded_frames(feats.frames);
    const std::size_t U = u.labels.size();
    const std::size_t V = cfg.model.vocab_size;

    Tensor enc = student.encode(tape, feats, true);
    Tensor pred = student.predict(tape, u.labels, true);
    Tensor logits = student.joint_logits(tape, enc, pred);
    Tensor lp = ad::log_softmax(tape, logits);

    Tensor loss = rnnt_loss_node(tape, lp, T, u.labels, V);
    UtteranceLoss out{loss.item(), loss.item(), 0.0};

    if (distilling) {
      ad::Tape teacher_tape(std::nullopt, /*recording=*/false);
      Tensor t_lp = teacher->lattice_log_probs(teacher_tape, feats, u.labels, tau, false);
      Tensor s_lp = tau == 1.0 ? lp : ad::log_softmax(tape, ad::scale(tape, logits, 1.0 / tau));
      Tensor kd = kd_loss_node(tape, s_lp, model::to_lattice(t_lp, T, U, V));
      const distill::LossBreakdown b = distill::total_loss(loss.item(), kd.item(), cfg.distill);
      loss = ad::add(tape, ad::scale(tape, loss, 1.0 - alpha), ad::scale(tape, kd, alpha));
      out = {b.total, b.transducer_loss, b.kd_loss};
    }

    const ad::Gradients g = tape.backpropagate(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor gi = g.of(params[i].second);
      auto src = gi.data();
      auto& dst = grads[i];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    return out;
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_total = 0.0, sum_t = 0.0, sum_kd = 0.0;
    double lr = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        for (std::size_t i = 0; i < params.size(); ++i) grads[i].assign(params[i].second.numel(), 0.0);
        for (std::size_t b = start; b < end; ++b) {
          const UtteranceLoss l = utterance_step(train[order[b]]);
          sum_total += l.total;
          sum_t += l.transducer;
          sum_kd += l.kd;
        }
        const double inv = 1.0 / static_cast<double>(end - start);
        for (auto& gv : grads) {
          for (double& x : gv) x *= inv;
        }
        lr = learning_rate(state.step + 1, cfg.schedule);
        optimizer_step(params, grads, state, lr, cfg.adam);
        if (options.record_step_digests) result.step_digests.push_back(parameter_digest(params));
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.diagnostic = "epoch " + std::to_string(epoch) + ", step " + std::to_string(state.step + 1) + ": " +
                          e.what();
      if (options.log) *options.log << "diverged: " << result.diagnostic << '\n';
      break;
    }

    EpochMetrics m;
    const double n = static_cast<double>(train.size());
    m.epoch = epoch;
    m.step = state.step;
    m.lr = lr;
    m.train_loss = sum_total / n;
    m.train_transducer_loss = sum_t / n;
    m.train_kd_loss = sum_kd / n;
    m.dev_wer = m.dev_ser = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(m.train_loss)) {
      result.diverged = true;
      result.diagnostic = "epoch " + std::to_string(epoch) + ": training loss is not finite";
      break;
    }
    if (options.dev && !options.dev->empty()) {
      eval::DecodeOptions dopt;
      dopt.beam_size = cfg.dev_beam_size;
      dopt.max_symbols_per_frame = cfg.max_symbols_per_frame;
      const eval::Evaluation ev = eval::evaluate_dataset(student, *options.dev, dopt);
      m.dev_wer = ev.score.wer_percent;
      m.dev_ser = ev.score.ser_percent;
    }
    result.epochs.push_back(m);
    last_good = student.snapshot();
    last_good_epoch = epoch;
    if (options.log) *options.log << metrics_row(m) << '\n';
    if (metrics_file.is_open()) metrics_file << metrics_row(m) << '\n' << std::flush;
    if (!options.out_dir.empty()) {
      model::save_checkpoint(make_checkpoint(last_good, epoch), options.out_dir + "/checkpoint.ckpt");
    }
  }

  result.checkpoint = make_checkpoint(last_good, last_good_epoch);
  if (result.diverged) result.checkpoint.metadata["diverged"] = "true";
  return result;
}

}  // namespace ctkd::train
