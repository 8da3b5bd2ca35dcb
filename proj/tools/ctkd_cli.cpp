// SPDX-License-Identifier: Apache-2.0
//
// ctkd <command> [--config FILE] [--set key=value ...] [--out DIR]
//
// Exit status: 0 success, 1 configuration error, 2 runtime failure.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ctkd/common/errors.hpp"
#include "ctkd/common/keyvalue.hpp"
#include "ctkd/eval/decode.hpp"
#include "ctkd/frontend/feature_io.hpp"
#include "ctkd/frontend/mfcc.hpp"
#include "ctkd/model/checkpoint.hpp"
#include "ctkd/model/config.hpp"
#include "ctkd/pipeline/pipeline.hpp"
#include "ctkd/train/trainer.hpp"
#include "ctkd/verify/gradient_suites.hpp"

namespace fs = std::filesystem;
using namespace ctkd;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
};

KeyValues load_config(const Common& c) {
  KeyValues kv = c.config.empty() ? KeyValues{} : KeyValues::load(c.config);
  for (const auto& s : c.sets) kv.apply_override(s);
  return kv;
}

std::string out_dir(const Common& c, const std::string& fallback) {
  const std::string dir = c.out.empty() ? fallback : c.out;
  fs::create_directories(dir);
  return dir;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

std::string join(const TokenSeq& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
  return out;
}

void evaluate_to(const model::ConformerTransducer& m, const pipeline::LoadedData& data, const eval::DecodeOptions& opt,
                 const std::string& dir) {
  for (const auto& [name, set] : data.eval_sets) {
    const auto ev = eval::evaluate_dataset(m, set, opt);
    std::ofstream out(dir + "/" + name + ".eval.txt", std::ios::trunc);
    eval::write_evaluation(out, ev.utterances, ev.score);
    std::cout << name << ": WER " << eval::format_percent(ev.score.wer_percent) << "%  SER "
              << eval::format_percent(ev.score.ser_percent) << "%  (" << ev.score.utterances << " utterances)\n";
  }
}

eval::DecodeOptions decode_options(const KeyValues& kv, const std::string& prefix) {
  eval::DecodeOptions o;
  o.beam_size = static_cast<std::size_t>(kv.get_int(prefix + "beam_size", 8));
  o.max_symbols_per_frame = static_cast<std::size_t>(kv.get_int(prefix + "max_symbols_per_frame", 10));
  if (o.beam_size == 0) throw ConfigError(prefix + "beam_size must be positive", prefix + "beam_size");
  if (o.max_symbols_per_frame == 0) {
    throw ConfigError(prefix + "max_symbols_per_frame must be positive", prefix + "max_symbols_per_frame");
  }
  return o;
}

int cmd_count_params(const Common& c) {
  KeyValues kv = load_config(c);
  const auto cfg = model::ModelConfig::from_keyvalues(kv, "model.");
  kv.reject_unused();
  const auto n = model::count_parameters(cfg);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "input_projection\t%llu\npositions\t%llu\nencoder_blocks\t%llu\nprediction_network\t%llu\n"
                "joint_network\t%llu\nembedding\t%llu\nencoder\t%llu\ndecoder\t%llu\ntotal\t%llu\nmillions\t%.2f\n",
                (unsigned long long)n.input_projection, (unsigned long long)n.positions,
                (unsigned long long)n.encoder_blocks, (unsigned long long)n.prediction_network,
                (unsigned long long)n.joint_network, (unsigned long long)n.embedding, (unsigned long long)n.encoder(),
                (unsigned long long)n.decoder(), (unsigned long long)n.total(), static_cast<double>(n.total()) / 1e6);
  std::cout << buf;
  if (!c.out.empty()) write_text(out_dir(c, c.out) + "/params.tsv", buf);
  return 0;
}

int cmd_gradcheck(const Common& c) {
  KeyValues kv = load_config(c);
  verify::SuiteOptions o;
  o.epsilon = kv.get_double("gradcheck.epsilon", o.epsilon);
  o.tolerance = kv.get_double("gradcheck.tolerance", o.tolerance);
  o.seed = static_cast<std::uint64_t>(kv.get_int("gradcheck.seed", static_cast<std::int64_t>(o.seed)));
  o.only = kv.get_string("gradcheck.suite", "");
  kv.reject_unused();
  if (!(o.epsilon > 0.0)) throw ConfigError("gradcheck.epsilon must be positive", "gradcheck.epsilon");
  const auto cases = verify::run_gradient_suites(o, &std::cout);
  std::size_t failed = 0;
  for (const auto& k : cases) failed += !k.passed;
  std::cout << cases.size() << " cases, " << failed << " failed\n";
  return failed == 0 ? 0 : 2;
}

int cmd_gen_toy_data(const Common& c) {
  KeyValues kv = load_config(c);
  kv.set("data.source", kv.get_string("data.source", "toy"));
  const auto data_cfg = pipeline::DataConfig::from_keyvalues(kv);
  kv.reject_unused();
  if (data_cfg.source != pipeline::DataConfig::Source::toy) {
    throw ConfigError("gen-toy-data needs data.source = toy", "data.source");
  }
  const std::string dir = out_dir(c, "toy_data");
  const auto data = pipeline::load_data(data_cfg);
  std::cout << frontend::save_dataset(data.train, dir, "train") << "\t" << data.train.size() << '\n';
  if (!data.dev.empty()) std::cout << frontend::save_dataset(data.dev, dir, "dev") << "\t" << data.dev.size() << '\n';
  for (const auto& [name, set] : data.eval_sets) {
    std::cout << frontend::save_dataset(set, dir, name) << "\t" << set.size() << '\n';
  }
  return 0;
}

int cmd_train(const Common& c, bool distill) {
  KeyValues kv = load_config(c);
  auto cfg = train::TrainConfig::from_keyvalues(kv);
  if (distill) cfg.mode = train::TrainMode::distill;
  if (cfg.mode == train::TrainMode::distill && !cfg.teacher_checkpoint) {
    throw ConfigError("distillation needs train.teacher_checkpoint", "train.teacher_checkpoint");
  }
  const auto data_cfg = pipeline::DataConfig::from_keyvalues(kv);
  const auto dopt = decode_options(kv, "eval.");
  kv.reject_unused();
  const std::string dir = out_dir(c, distill ? "distill_out" : "train_out");
  const auto data = pipeline::load_data(data_cfg);
  train::TrainOptions opt;
  opt.out_dir = dir;
  opt.dev = data.dev.empty() ? nullptr : &data.dev;
  opt.log = &std::cout;
  std::cout << train::metrics_header() << '\n';
  auto result = train::run_training(cfg, data.train, opt);
  model::save_checkpoint(result.checkpoint, dir + "/checkpoint.ckpt");
  if (result.diverged) {
    std::cerr << "training diverged: " << result.diagnostic << " (last good checkpoint kept)\n";
    return 2;
  }
  evaluate_to(model::load_checkpoint(dir + "/checkpoint.ckpt").instantiate(), data, dopt, dir);
  return 0;
}

int cmd_eval(const Common& c) {
  KeyValues kv = load_config(c);
  const std::string ckpt = kv.get_string("eval.checkpoint");
  const auto dopt = decode_options(kv, "eval.");
  const auto data_cfg = pipeline::DataConfig::from_keyvalues(kv);
  kv.reject_unused();
  pipeline::DataConfig only_eval = data_cfg;
  only_eval.train_utterances = 0;
  only_eval.dev_utterances = 0;
  if (only_eval.source == pipeline::DataConfig::Source::manifest) {
    pipeline::LoadedData data;
    for (const auto& e : only_eval.eval_sets) data.eval_sets.emplace_back(e.name, frontend::load_dataset(e.manifest));
    evaluate_to(model::load_checkpoint(ckpt).instantiate(), data, dopt, out_dir(c, "eval_out"));
    return 0;
  }
  evaluate_to(model::load_checkpoint(ckpt).instantiate(), pipeline::load_data(only_eval), dopt, out_dir(c, "eval_out"));
  return 0;
}

int cmd_decode(const Common& c) {
  KeyValues kv = load_config(c);
  const std::string ckpt = kv.get_string("decode.checkpoint");
  const auto dopt = decode_options(kv, "decode.");
  std::vector<std::string> feature_files = kv.has("decode.features") ? kv.get_list("decode.features") : std::vector<std::string>{};
  std::vector<std::string> pcm_files = kv.has("decode.pcm") ? kv.get_list("decode.pcm") : std::vector<std::string>{};
  frontend::FrontendConfig fc;
  fc.sample_rate = kv.get_double("frontend.sample_rate", fc.sample_rate);
  fc.window = kv.get_double("frontend.window", fc.window);
  fc.hop = kv.get_double("frontend.hop", fc.hop);
  fc.num_mel = static_cast<std::size_t>(kv.get_int("frontend.num_mel", static_cast<std::int64_t>(fc.num_mel)));
  fc.num_ceps = static_cast<std::size_t>(kv.get_int("frontend.num_ceps", static_cast<std::int64_t>(fc.num_ceps)));
  fc.log_floor = kv.get_double("frontend.log_floor", fc.log_floor);
  fc.preemphasis = kv.get_double("frontend.preemphasis", fc.preemphasis);
  fc.fft_size = static_cast<std::size_t>(kv.get_int("frontend.fft_size", static_cast<std::int64_t>(fc.fft_size)));
  kv.reject_unused();
  if (feature_files.empty() && pcm_files.empty()) {
    throw ConfigError("decode needs decode.features or decode.pcm", "decode.features");
  }
  const auto m = model::load_checkpoint(ckpt).instantiate();
  std::string text;
  auto run = [&](const std::string& path, const frontend::FeatureMatrix& f) {
    const auto h = dopt.beam_size == 1 ? eval::greedy_decode(m, f, dopt.max_symbols_per_frame)
                                       : eval::beam_decode(m, f, dopt);
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", h.log_score);
    text += path + '\t' + join(h.tokens) + '\t' + score + '\n';
  };
  for (const auto& p : feature_files) run(p, frontend::read_features(p));
  for (const auto& p : pcm_files) run(p, frontend::compute_mfcc(frontend::read_pcm16(p), fc));
  std::cout << text;
  if (!c.out.empty()) write_text(out_dir(c, c.out) + "/hypotheses.tsv", text);
  return 0;
}

int cmd_pipeline(const Common& c) {
  KeyValues kv = load_config(c);
  if (!c.out.empty()) kv.set("pipeline.out_dir", c.out);
  const auto cfg = pipeline::PipelineConfig::from_keyvalues(kv);
  pipeline::PipelineOptions opt;
  opt.log = &std::cout;
  const auto result = pipeline::run_pipeline(cfg, opt);
  std::cout << '\n' << result.table;
  return result.failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive knowledge distillation for streaming conformer transducers"};
  app.require_subcommand(1);
  Common common;
  struct Command {
    const char* name;
    const char* help;
  };
  const std::vector<Command> commands{
      {"train", "train a model from scratch"},
      {"distill", "distil a student from train.teacher_checkpoint"},
      {"pipeline", "run a multi-stage distillation pipeline"},
      {"eval", "score a checkpoint on evaluation sets"},
      {"decode", "decode feature or PCM files"},
      {"count-params", "exact parameter count of model.* settings"},
      {"gradcheck", "finite-difference gradient suites"},
      {"gen-toy-data", "write the synthetic corpus as manifests and feature files"},
  };
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", common.config, "configuration file");
    sub->add_option("--set", common.sets, "override, key=value (repeatable)");
    sub->add_option("--out", common.out, "output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "train") return cmd_train(common, false);
    if (name == "distill") return cmd_train(common, true);
    if (name == "pipeline") return cmd_pipeline(common);
    if (name == "eval") return cmd_eval(common);
    if (name == "decode") return cmd_decode(common);
    if (name == "count-params") return cmd_count_params(common);
    if (name == "gradcheck") return cmd_gradcheck(common);
    if (name == "gen-toy-data") return cmd_gen_toy_data(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what();
    if (!e.key().empty()) std::cerr << " [key: " << e.key() << "]";
    std::cerr << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
