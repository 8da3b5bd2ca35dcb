#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "ctkd/common/errors.hpp"
#include "ctkd/diffcore/ops.hpp"
#include "ctkd/distill/kd_loss.hpp"
#include "ctkd/frontend/toy_corpus.hpp"
#include "ctkd/model/checkpoint.hpp"
#include "ctkd/model/transducer.hpp"
#include "ctkd/rnnt/rnnt_loss.hpp"
#include "ctkd/train/loss_nodes.hpp"
#include "ctkd/train/optimizer.hpp"
#include "ctkd/train/schedule.hpp"
#include "ctkd/train/trainer.hpp"
#include "helpers.hpp"

using namespace ctkd;
using namespace ctkd::train;

TEST_CASE("learning rate schedule at reference steps") {
  const ScheduleConfig cfg;  // 1e-4, 10000, 40000
  CHECK(learning_rate(0, cfg) == doctest::Approx(1.0e-7).epsilon(1e-12));
  CHECK(learning_rate(5000, cfg) == doctest::Approx(1.26e-5).epsilon(1e-12));
  CHECK(learning_rate(10000, cfg) == doctest::Approx(1.0e-4).epsilon(1e-12));
  CHECK(std::abs(learning_rate(650000, cfg) - 9.2651e-5) <= 1e-9);
  CHECK(learning_rate(650000, cfg) == doctest::Approx(5e-4 * std::pow(0.9, 16.0)).epsilon(1e-12));
}

TEST_CASE("learning rate is continuous in the decay exponent") {
  const ScheduleConfig cfg;
  // 5 * 0.9^g reaches 1 at g = ln 5 / ln(1/0.9), about 15.28; the cap holds until then.
  CHECK(learning_rate(10000 + 40000 * 15, cfg) == doctest::Approx(1e-4));
  const double a = learning_rate(10000 + 40000 * 16, cfg);
  const double b = learning_rate(10000 + 40000 * 16 + 20000, cfg);
  CHECK(b < a);
  CHECK(b == doctest::Approx(5e-4 * std::pow(0.9, 16.5)).epsilon(1e-12));
}

TEST_CASE("schedule validation") {
  ScheduleConfig cfg;
  cfg.warmup = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("adam matches a scalar recurrence") {
  const ad::Tensor p({1}, {0.3}, true);
  const model::NamedTensors params{{"p", p}};
  TrainState state;
  AdamConfig cfg;
  const double g = 0.7, lr = 0.01;
  double w = 0.3, m = 0.0, v = 0.0;
  for (int k = 1; k <= 25; ++k) {
    optimizer_step(params, {{g}}, state, lr, cfg);
    m = 0.9 * m + 0.1 * g;
    v = 0.98 * v + 0.02 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, k));
    const double vh = v / (1.0 - std::pow(0.98, k));
    w -= lr * mh / (std::sqrt(vh) + 1e-9);
    CHECK(p[0] == doctest::Approx(w).epsilon(1e-14));
  }
  CHECK(state.step == 25);
}

TEST_CASE("zero gradients leave parameters unchanged") {
  const ad::Tensor p({3}, {1.0, -2.0, 0.5}, true);
  TrainState state;
  optimizer_step({{"p", p}}, {{0.0, 0.0, 0.0}}, state, 0.1);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(p[2] == 0.5);
  CHECK(state.step == 1);
}

TEST_CASE("global norm clipping") {
  const ad::Tensor a({1}, {0.0}, true), b({1}, {0.0}, true);
  TrainState state;
  const StepInfo info = optimizer_step({{"a", a}, {"b", b}}, {{30.0}, {40.0}}, state, 0.1);
  CHECK(info.grad_norm == doctest::Approx(50.0));
  CHECK(info.clip_scale == doctest::Approx(0.1));
  // First Adam moment sees the clipped gradient.
  CHECK(state.m[0][0] == doctest::Approx(0.1 * 3.0));
  CHECK(state.m[1][0] == doctest::Approx(0.1 * 4.0));
}

TEST_CASE("non-finite gradient aborts the step without side effects") {
  const ad::Tensor p({2}, {1.0, 2.0}, true);
  TrainState state;
  optimizer_step({{"p", p}}, {{0.1, 0.2}}, state, 0.1);
  const TrainState before = state;
  const double p0 = p[0], p1 = p[1];
  CHECK_THROWS_AS(optimizer_step({{"p", p}}, {{std::numeric_limits<double>::quiet_NaN(), 0.2}}, state, 0.1),
                  NumericError);
  CHECK(p[0] == p0);
  CHECK(p[1] == p1);
  CHECK(state.step == before.step);
  CHECK(state.m == before.m);
  CHECK(state.v == before.v);
}

TEST_CASE("loss nodes route lattice gradients") {
  std::mt19937_64 rng(1);
  const std::size_t T = 3, U = 2, V = 2;
  const ad::Tensor logits = test::random_tensor({T * (U + 1), V + 1}, rng);
  const TokenSeq labels{1, 2};
  ad::Tape tape;
  const ad::Tensor lp = ad::log_softmax(tape, logits);
  const ad::Tensor loss = rnnt_loss_node(tape, lp, T, labels, V);
  const auto lat = model::to_lattice(lp, T, U, V);
  CHECK(loss.item() == doctest::Approx(rnnt::rnnt_loss(lat, labels).loss).epsilon(1e-14));
  const auto grads = tape.backpropagate(loss);
  const auto ref = rnnt::rnnt_loss(lat, labels);
  const ad::Tensor g = grads.of(logits);
  for (std::size_t n = 0; n < T * (U + 1); ++n) {
    double gs = 0.0;
    for (std::size_t k = 0; k <= V; ++k) gs += ref.grad_log_probs[n * (V + 1) + k];
    for (std::size_t k = 0; k <= V; ++k) {
      const std::size_t i = n * (V + 1) + k;
      CHECK(g[i] == doctest::Approx(ref.grad_log_probs[i] - std::exp(lat.log_probs[i]) * gs).epsilon(1e-10));
    }
  }

  const auto teacher = test::random_lattice(T, U, V, rng);
  ad::Tape tape2;
  const ad::Tensor lp2 = ad::log_softmax(tape2, logits);
  const ad::Tensor kd = kd_loss_node(tape2, lp2, teacher);
  const auto kref = distill::kd_loss(teacher, model::to_lattice(lp2, T, U, V));
  CHECK(kd.item() == doctest::Approx(kref.loss).epsilon(1e-14));
  const ad::Tensor gk = tape2.backpropagate(kd).of(logits);
  for (std::size_t i = 0; i < gk.numel(); ++i) CHECK(gk[i] == doctest::Approx(kref.grad_student_logits[i]).epsilon(1e-10));
}

namespace {

frontend::Dataset tiny_corpus(std::size_t n, std::uint64_t seed) {
  frontend::ToyCorpusSpec spec;
  spec.vocab_size = 3;
  spec.feature_dim = 6;
  spec.label_len_min = 2;
  spec.label_len_max = 4;
  spec.frames_per_label = 4;
  spec.noise_std = 0.3;
  spec.num_utterances = n;
  spec.utterance_seed = seed;
  return frontend::generate_toy_corpus(spec);
}

TrainConfig tiny_train(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.model = test::tiny_config();
  c.epochs = 3;
  c.batch_size = 4;
  c.schedule = {3e-3, 10, 100};
  c.augment = {2, 1, 2, 1};
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("training reduces the loss on a toy corpus") {
  const auto data = tiny_corpus(24, 3);
  const auto dev = tiny_corpus(8, 4);
  TrainConfig cfg = tiny_train(TrainMode::scratch);
  cfg.epochs = 30;
  const std::string dir = test::temp_dir("train_descent");
  TrainOptions opts;
  opts.out_dir = dir;
  opts.dev = &dev;
  const TrainResult r = run_training(cfg, data, opts);
  REQUIRE(r.epochs.size() == 30);
  CHECK_FALSE(r.diverged);
  CHECK(r.epochs.back().train_loss < r.epochs.front().train_loss);
  CHECK(std::isfinite(r.epochs.back().dev_wer));
  CHECK(r.checkpoint.step == 30 * 6);
  CHECK(r.checkpoint.metadata.at("epochs_completed") == "30");
  CHECK(std::filesystem::exists(dir + "/metrics.tsv"));
  CHECK(std::filesystem::exists(dir + "/checkpoint.ckpt"));
  std::ifstream in(dir + "/metrics.tsv");
  std::string header;
  std::getline(in, header);
  CHECK(header == metrics_header());
}

TEST_CASE("training is deterministic") {
  const auto data = tiny_corpus(12, 5);
  const TrainConfig cfg = tiny_train(TrainMode::scratch);
  const auto a = run_training(cfg, data);
  const auto b = run_training(cfg, data);
  CHECK(parameter_digest(a.checkpoint.parameters) == parameter_digest(b.checkpoint.parameters));
  CHECK(model::serialize_checkpoint(a.checkpoint) == model::serialize_checkpoint(b.checkpoint));
  TrainConfig other = cfg;
  other.seed = 6;
  CHECK(parameter_digest(run_training(other, data).checkpoint.parameters) !=
        parameter_digest(a.checkpoint.parameters));
}

TEST_CASE("distillation with alpha zero follows the scratch trajectory") {
  const auto data = tiny_corpus(12, 6);
  model::ModelConfig tcfg = test::tiny_config();
  tcfg.encoder.model_dim = 12;
  tcfg.encoder.attention_heads = 3;
  const model::ConformerTransducer teacher(tcfg, 77);
  const model::Checkpoint teacher_ck = model::Checkpoint::of(teacher);

  TrainOptions opts;
  opts.record_step_digests = true;
  const auto scratch = run_training(tiny_train(TrainMode::scratch), data, opts);
  TrainConfig kd = tiny_train(TrainMode::distill);
  kd.distill.alpha = 0.0;
  opts.teacher = &teacher_ck;
  const auto distilled = run_training(kd, data, opts);
  REQUIRE(scratch.step_digests.size() == 9);
  CHECK(scratch.step_digests == distilled.step_digests);
  CHECK(distilled.epochs.back().train_kd_loss > 0.0);

  kd.distill.alpha = 0.5;
  const auto mixed = run_training(kd, data, opts);
  CHECK(mixed.step_digests != scratch.step_digests);
}

TEST_CASE("distillation rejects an incompatible teacher") {
  const auto data = tiny_corpus(4, 7);
  model::ModelConfig tcfg = test::tiny_config();
  tcfg.vocab_size = 4;
  const model::Checkpoint teacher_ck = model::Checkpoint::of(model::ConformerTransducer(tcfg, 1));
  TrainOptions opts;
  opts.teacher = &teacher_ck;
  CHECK_THROWS_AS(run_training(tiny_train(TrainMode::distill), data, opts), ConfigError);
  CHECK_THROWS_AS(run_training(tiny_train(TrainMode::distill), data), ConfigError);
}

TEST_CASE("train config keys") {
  KeyValues kv = KeyValues::parse(
      "train.mode = distill\ntrain.epochs = 4\ndistill.alpha = 0.1\nschedule.warmup = 50\nmodel.vocab_size = 5\n");
  const TrainConfig c = TrainConfig::from_keyvalues(kv);
  CHECK(c.mode == TrainMode::distill);
  CHECK(c.epochs == 4);
  CHECK(c.distill.alpha == 0.1);
  CHECK(c.schedule.warmup == 50);
  CHECK(c.model.vocab_size == 5);
  KeyValues out;
  c.to_keyvalues(out);
  const TrainConfig d = TrainConfig::from_keyvalues(out);
  CHECK(d.epochs == 4);
  CHECK(d.model == c.model);
  CHECK_THROWS_AS(parse_train_mode("teach"), ConfigError);
}
