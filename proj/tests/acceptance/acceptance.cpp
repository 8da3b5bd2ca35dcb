// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 when any
// selected criterion fails.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "ctkd/common/errors.hpp"
#include "ctkd/common/keyvalue.hpp"
#include "ctkd/distill/kd_loss.hpp"
#include "ctkd/frontend/toy_corpus.hpp"
#include "ctkd/model/checkpoint.hpp"
#include "ctkd/model/transducer.hpp"
#include "ctkd/pipeline/compression.hpp"
#include "ctkd/pipeline/pipeline.hpp"
#include "ctkd/rnnt/rnnt_loss.hpp"
#include "ctkd/train/schedule.hpp"
#include "ctkd/train/trainer.hpp"
#include "ctkd/verify/gradient_suites.hpp"

namespace fs = std::filesystem;
using namespace ctkd;

namespace {

// Pinned tolerances.
constexpr double kOracleTolerance = 1e-6;
constexpr int kOracleInstances = 1000;
constexpr double kOracleBudgetSeconds = 60.0;
constexpr double kGradEpsilon = 1e-5;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradBudgetSeconds = 600.0;
constexpr double kScheduleTolerance = 1e-12;
constexpr double kScheduleLateTolerance = 1e-9;
constexpr int kCompressionTolerance = 1;
constexpr double kParamTarget = 128e6;
constexpr double kParamTolerance = 0.15;
constexpr std::size_t kCausalUtterances = 50;
constexpr double kDistillBudgetSeconds = 30.0 * 60.0;
constexpr double kPipelineBudgetSeconds = 60.0 * 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- 1 ----------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> T(1, 4), U(0, 3), V(1, 3);
  std::normal_distribution<double> n(0.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < kOracleInstances; ++i) {
    const auto t = static_cast<std::size_t>(T(rng)), u = static_cast<std::size_t>(U(rng)),
               v = static_cast<std::size_t>(V(rng));
    std::uniform_int_distribution<Token> lab(1, static_cast<Token>(v));
    TokenSeq labels(u);
    for (auto& y : labels) y = lab(rng);
    std::vector<double> logits(t * (u + 1) * (v + 1));
    for (auto& x : logits) x = n(rng);
    const auto lat = rnnt::Lattice::from_logits(t, u, v, logits);
    const double diff =
        std::abs(rnnt::rnnt_loss(lat, labels).loss - rnnt::enumerate_alignments_oracle(lat, labels).loss);
    worst = std::max(worst, diff);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst <= kOracleTolerance && secs < kOracleBudgetSeconds,
          std::to_string(kOracleInstances) + " instances, max |diff| " + fmt("%.3g", worst) + " (tol 1e-6), " +
              fmt("%.2f", secs) + " s"};
}

// --- 2 ----------------------------------------------------------------------

Outcome gradient_suites() {
  const auto start = std::chrono::steady_clock::now();
  verify::SuiteOptions opt;
  opt.epsilon = kGradEpsilon;
  opt.tolerance = kGradTolerance;
  const auto cases = verify::run_gradient_suites(opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::size_t failed = 0;
  double worst = 0.0;
  std::map<std::string, std::size_t> per_suite;
  for (const auto& c : cases) {
    failed += !c.passed;
    worst = std::max(worst, c.max_relative_error);
    ++per_suite[c.suite];
  }
  const bool covered = per_suite.count("diffcore") && per_suite.count("rnnt") && per_suite.count("distill") &&
                       per_suite.count("model");
  std::ostringstream d;
  d << cases.size() << " cases (";
  bool first = true;
  for (const auto& [s, n] : per_suite) d << (first ? "" : ", ") << s << " " << n, first = false;
  d << "), " << failed << " failed, max rel err " << fmt("%.3g", worst) << " (tol 1e-4), " << fmt("%.1f", secs)
    << " s";
  return {covered && failed == 0 && worst <= kGradTolerance && secs < kGradBudgetSeconds, d.str()};
}

// --- 3 ----------------------------------------------------------------------

Outcome schedule_exactness() {
  const train::ScheduleConfig cfg{1e-4, 10000, 40000};
  struct Point {
    std::uint64_t step;
    double expected, tol;
  };
  const Point points[] = {{0, 1.0e-7, kScheduleTolerance},
                          {5000, 1.26e-5, kScheduleTolerance},
                          {10000, 1.0e-4, kScheduleTolerance},
                          {650000, 9.2651e-5, kScheduleLateTolerance}};
  bool ok = true;
  std::ostringstream d;
  for (const auto& p : points) {
    const double lr = train::learning_rate(p.step, cfg);
    ok &= std::abs(lr - p.expected) <= p.tol;
    d << "lr(" << p.step << ")=" << fmt("%.6g", lr) << " ";
  }
  return {ok, d.str()};
}

// --- 4 ----------------------------------------------------------------------

Outcome table_arithmetic() {
  struct Cell {
    const char* label;
    double teacher, student;
    int expected;
  };
  // (teacher, student) parameter counts in millions and the printed percentage.
  const Cell cells[] = {
      // w.r.t. stage teacher
      {"S1/T1", 128, 80, 38}, {"T2/T1", 128, 80, 38}, {"S2/T1", 128, 62, 52}, {"S3/T2", 80, 62, 23},
      {"T3/T2", 80, 62, 23},  {"S4/T1", 128, 46, 64}, {"S5/T3", 62, 46, 25},  {"S6/T1", 128, 57, 55},
      {"T4/T1", 128, 57, 55}, {"S7/T1", 128, 24, 81}, {"S8/T4", 57, 24, 58},
      // w.r.t. T1
      {"B1", 128, 80, 38}, {"S1", 128, 80, 38}, {"T2", 128, 80, 38}, {"B2", 128, 62, 52}, {"S2", 128, 62, 52},
      {"S3", 128, 62, 52}, {"T3", 128, 62, 52}, {"B3", 128, 46, 64}, {"S4", 128, 46, 64}, {"S5", 128, 46, 64},
      {"B4", 128, 57, 55}, {"S6", 128, 57, 55}, {"T4", 128, 57, 55}, {"B5", 128, 24, 81}, {"S7", 128, 24, 81},
      {"S8", 128, 24, 81},
  };
  bool ok = true;
  std::size_t exact = 0, within = 0;
  std::string off;
  for (const auto& c : cells) {
    const int got = pipeline::compression_percent(c.teacher, c.student).rounded;
    if (got == c.expected) {
      ++exact;
    } else if (std::abs(got - c.expected) <= kCompressionTolerance) {
      ++within;
      off += std::string(" ") + c.label + "=" + std::to_string(got) + "/" + std::to_string(c.expected);
    } else {
      ok = false;
      off += std::string(" MISMATCH ") + c.label + "=" + std::to_string(got) + "/" + std::to_string(c.expected);
    }
  }
  return {ok, std::to_string(std::size(cells)) + " cells, " + std::to_string(exact) + " exact, " +
                  std::to_string(within) + " within 1 point:" + (off.empty() ? " none" : off)};
}

// --- 5 ----------------------------------------------------------------------

Outcome parameter_count(const std::string& source_dir) {
  const KeyValues kv = KeyValues::load(source_dir + "/configs/t1.cfg");
  const auto cfg = model::ModelConfig::from_keyvalues(kv);
  const double total = static_cast<double>(model::count_parameters(cfg).total());
  const double rel = (total - kParamTarget) / kParamTarget;
  const bool shape_ok = cfg.encoder.num_layers == 16 && cfg.encoder.model_dim == 512 &&
                        cfg.encoder.attention_heads == 4 && cfg.decoder.num_layers == 2 &&
                        cfg.decoder.hidden_dim == 1024 && cfg.vocab_size == 10026;
  return {shape_ok && std::abs(rel) <= kParamTolerance,
          fmt("%.0f", total) + " params (" + fmt("%+.2f", 100.0 * rel) + "% vs 128M, tol 15%), joint_dim " +
              std::to_string(cfg.joint_dim) + ", ff_expansion " + std::to_string(cfg.encoder.ff_expansion)};
}

// --- shared toy model for 8, 9, 10 -----------------------------------------

struct ToyFixture {
  frontend::Dataset train, probe;
  train::TrainConfig config;
  model::Checkpoint trained;
};

const ToyFixture& toy_fixture() {
  static const ToyFixture fx = [] {
    ToyFixture f;
    frontend::ToyCorpusSpec spec;
    spec.vocab_size = 8;
    spec.feature_dim = 40;
    spec.frames_per_label = 4;
    spec.noise_std = 1.0;
    spec.num_utterances = 200;
    spec.utterance_seed = 11;
    f.train = frontend::generate_toy_corpus(spec);
    spec.num_utterances = kCausalUtterances;
    spec.utterance_seed = 4242;
    f.probe = frontend::generate_toy_corpus(spec);
    auto& c = f.config;
    c.model.feature_dim = 40;
    c.model.vocab_size = 8;
    c.model.joint_dim = 32;
    c.model.encoder.num_layers = 2;
    c.model.encoder.model_dim = 32;
    c.model.encoder.attention_heads = 4;
    c.model.encoder.ff_expansion = 2;
    c.model.encoder.conv_kernel = 15;
    c.model.encoder.pooling_layers = 2;
    c.model.encoder.max_positions = 64;
    c.model.decoder.hidden_dim = 32;
    c.schedule = {1e-3, 20, 2000};
    c.epochs = 2;
    c.batch_size = 8;
    c.seed = 3;
    c.augment = {4, 2, 4, 2};
    f.trained = train::run_training(c, f.train).checkpoint;
    return f;
  }();
  return fx;
}

// --- 8 ----------------------------------------------------------------------

Outcome streaming_causality() {
  const auto& fx = toy_fixture();
  const auto m = fx.trained.instantiate();
  const std::size_t pf = m.config().encoder.pooling_factor();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 3.0);
  std::size_t checked = 0, mismatched = 0;
  ad::Tape tape(std::nullopt, false);
  for (const auto& u : fx.probe) {
    const std::size_t T = m.encoded_frames(u.features.frames), P = u.labels.size() + 1, S = m.config().vocab_size + 1;
    const ad::Tensor ref = m.lattice_log_probs(tape, u.features, u.labels, 1.0, false);
    for (std::size_t t = 0; t + 1 < T; ++t) {
      auto f = u.features;
      for (std::size_t r = (t + 1) * pf; r < f.frames; ++r)
        for (std::size_t c = 0; c < f.dims; ++c) f.at(r, c) = noise(rng);
      const ad::Tensor alt = m.lattice_log_probs(tape, f, u.labels, 1.0, false);
      for (std::size_t tt = 0; tt <= t; ++tt)
        for (std::size_t uu = 0; uu < P; ++uu)
          for (std::size_t k = 0; k < S; ++k) {
            ++checked;
            mismatched += ref.at(tt * P + uu, k) != alt.at(tt * P + uu, k);
          }
    }
  }
  return {mismatched == 0 && checked > 0,
          std::to_string(fx.probe.size()) + " utterances, " + std::to_string(checked) + " logits compared, " +
              std::to_string(mismatched) + " differ"};
}

// --- 9 ----------------------------------------------------------------------

Outcome kd_degenerate() {
  const auto& fx = toy_fixture();
  // kd(M, M) for a trained and two freshly initialised models.
  std::vector<model::ConformerTransducer> models;
  models.push_back(fx.trained.instantiate());
  models.emplace_back(fx.config.model, 101);
  models.emplace_back(fx.config.model, 202);
  double worst = 0.0;
  ad::Tape tape(std::nullopt, false);
  for (const auto& m : models) {
    for (std::size_t i = 0; i < 10; ++i) {
      const auto& u = fx.probe[i];
      const ad::Tensor lp = m.lattice_log_probs(tape, u.features, u.labels, 1.0, false);
      const auto lat = model::to_lattice(lp, m.encoded_frames(u.features.frames), u.labels.size(),
                                         m.config().vocab_size);
      worst = std::max(worst, std::abs(distill::kd_loss(lat, lat).loss));
    }
  }
  // alpha = 0 distillation against the trained teacher versus scratch training.
  frontend::Dataset subset(fx.train.begin(), fx.train.begin() + 48);
  train::TrainConfig scratch = fx.config;
  scratch.model.encoder.model_dim = 16;
  scratch.model.joint_dim = 16;
  scratch.model.decoder.hidden_dim = 16;
  scratch.epochs = 2;
  scratch.seed = 9;
  train::TrainConfig kd = scratch;
  kd.mode = train::TrainMode::distill;
  kd.distill.alpha = 0.0;
  train::TrainOptions opt;
  opt.record_step_digests = true;
  const auto a = train::run_training(scratch, subset, opt);
  opt.teacher = &fx.trained;
  const auto b = train::run_training(kd, subset, opt);
  const bool same = !a.step_digests.empty() && a.step_digests == b.step_digests &&
                    train::parameter_digest(a.checkpoint.parameters) == train::parameter_digest(b.checkpoint.parameters);
  return {worst == 0.0 && same, "kd(M,M) max " + fmt("%.3g", worst) + " over 3 models x 10 utterances; alpha=0 vs scratch: " +
                                    std::to_string(a.step_digests.size()) + " steps, trajectories " +
                                    (same ? "bit-identical" : "DIFFER")};
}

// --- 10 ---------------------------------------------------------------------

Outcome checkpoint_round_trip(const std::string& out) {
  const auto& fx = toy_fixture();
  fs::create_directories(out);
  const std::string a = out + "/first.ckpt", b = out + "/second.ckpt";
  model::save_checkpoint(fx.trained, a);
  model::save_checkpoint(model::load_checkpoint(a), b);
  const bool identical = model::file_digest(a) == model::file_digest(b) && fs::file_size(a) == fs::file_size(b);
  model::ModelConfig other = fx.config.model;
  other.encoder.model_dim = 16;
  bool rejected = false;
  try {
    model::load_checkpoint(a, other);
  } catch (const ConfigError&) {
    rejected = true;
  }
  return {identical && rejected, std::string("second save ") + (identical ? "byte-identical" : "DIFFERS") +
                                     " (" + model::file_digest(b) + "), cross-config load " +
                                     (rejected ? "rejected" : "ACCEPTED")};
}

// --- 6, 7 -------------------------------------------------------------------

struct ToyRun {
  pipeline::PipelineResult result;
  double seconds = 0.0;
};

const pipeline::StageComparison* comparison_for(const pipeline::PipelineResult& r, std::size_t stage) {
  for (const auto& c : r.comparisons)
    if (c.stage_id == stage) return &c;
  return nullptr;
}

Outcome distill_beats_scratch(const ToyRun& run) {
  const auto& r = run.result;
  if (r.failed) return {false, "pipeline failed: " + r.failure};
  const auto* c = comparison_for(r, r.rows.empty() ? 0 : r.rows.back().stage_id);
  if (!c || !c->has_baseline) return {false, "no baseline comparison in the final stage"};
  const bool ok = c->direct_wer.mean <= c->baseline_wer.mean && run.seconds < kDistillBudgetSeconds;
  std::ostringstream d;
  d << c->set << " WER mean over seeds: " << c->direct_role << " (distilled from T1) " << fmt("%.2f", c->direct_wer.mean)
    << " vs " << c->baseline_role << " (scratch) " << fmt("%.2f", c->baseline_wer.mean) << "; " << c->progressive_role
    << " (progressive) " << fmt("%.2f", c->progressive_wer.mean) << "; run " << fmt("%.0f", run.seconds) << " s";
  return {ok, d.str()};
}

Outcome multistage_vs_direct(const ToyRun& run) {
  const auto& r = run.result;
  if (r.failed) return {false, "pipeline failed: " + r.failure};
  bool promoted = !r.promotions.empty();
  for (const auto& p : r.promotions) promoted &= p.identical;
  const bool table = r.table.find("progressive") != std::string::npos && !r.comparisons.empty();
  std::ostringstream d;
  d << r.promotions.size() << " promotions " << (promoted ? "verified" : "NOT verified") << ", comparison table "
    << (table ? "emitted" : "MISSING");
  for (const auto& c : r.comparisons) {
    if (c.direct_role.empty()) continue;
    d << "; stage " << c.stage_id << " " << c.set << ": " << c.progressive_role << " " << fmt("%.2f", c.progressive_wer.mean)
      << " vs " << c.direct_role << " " << fmt("%.2f", c.direct_wer.mean) << " ("
      << (c.progressive_wer.mean <= c.direct_wer.mean ? "progressive ahead or tied" : "direct ahead") << ", reported only)";
  }
  d << "; run " << fmt("%.0f", run.seconds) << " s";
  return {promoted && table && run.seconds < kPipelineBudgetSeconds, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::string source_dir = CTKD_SOURCE_DIR;
  std::string toy_config;
  std::vector<std::string> overrides;
  std::string out = (fs::temp_directory_path() / "ctkd_acceptance").string();
  app.add_option("--criteria", criteria, "criteria to run")->delimiter(',');
  app.add_option("--source-dir", source_dir, "repository root");
  app.add_option("--toy-config", toy_config, "pipeline config for criteria 6 and 7");
  app.add_option("--set", overrides, "override for the toy pipeline config");
  app.add_option("--out", out, "working directory");
  CLI11_PARSE(app, argc, argv);
  if (toy_config.empty()) toy_config = source_dir + "/configs/toy_acceptance.cfg";

  std::optional<ToyRun> toy;
  auto toy_run = [&]() -> const ToyRun& {
    if (!toy) {
      KeyValues kv = KeyValues::load(toy_config);
      for (const auto& s : overrides) kv.apply_override(s);
      kv.set("pipeline.out_dir", out + "/toy_pipeline");
      const auto cfg = pipeline::PipelineConfig::from_keyvalues(kv);
      pipeline::PipelineOptions opt;
      opt.log = &std::cerr;
      const auto start = std::chrono::steady_clock::now();
      ToyRun r;
      r.result = pipeline::run_pipeline(cfg, opt);
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cout << r.result.table << std::flush;
      toy = std::move(r);
    }
    return *toy;
  };

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> all = {
      {1, {"transducer loss equals alignment enumeration", oracle_equivalence}},
      {2, {"gradient suites", gradient_suites}},
      {3, {"learning-rate schedule", schedule_exactness}},
      {4, {"compression table arithmetic", table_arithmetic}},
      {5, {"large teacher parameter count", [&] { return parameter_count(source_dir); }}},
      {6, {"distillation beats scratch", [&] { return distill_beats_scratch(toy_run()); }}},
      {7, {"multi-stage versus direct", [&] { return multistage_vs_direct(toy_run()); }}},
      {8, {"streaming causality", streaming_causality}},
      {9, {"distillation degenerate cases", kd_degenerate}},
      {10, {"checkpoint round-trip", [&] { return checkpoint_round_trip(out + "/checkpoint"); }}},
  };

  bool all_pass = true;
  for (int c : criteria) {
    const auto it = all.find(c);
    if (it == all.end()) {
      std::cerr << "unknown criterion " << c << '\n';
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass &= o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << it->second.first << "): " << o.detail
              << std::endl;
  }
  return all_pass ? 0 : 1;
}
