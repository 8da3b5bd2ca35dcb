// SPDX-License-Identifier: Apache-2.0
#include "ctkd/pipeline/pipeline_config.hpp"

#include "ctkd/common/errors.hpp"
#include "ctkd/frontend/feature_io.hpp"
#include "ctkd/model/config.hpp"

namespace ctkd::pipeline {
namespace {

std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError(key + " must be non-negative", key);
  return static_cast<std::size_t>(v);
}

TeacherSource parse_source(const std::string& text) {
  TeacherSource s;
  if (text == "original") {
    s.kind = TeacherSource::Kind::original;
  } else if (text == "previous_stage") {
    s.kind = TeacherSource::Kind::previous_stage;
  } else if (!text.empty()) {
    s.kind = TeacherSource::Kind::path;
    s.path = text;
  } else {
    throw ConfigError("empty teacher_source");
  }
  return s;
}

}  // namespace

DataConfig DataConfig::from_keyvalues(const KeyValues& kv) {
  DataConfig d;
  const std::string source = kv.get_string("data.source", "toy");
  if (source == "toy") {
    d.source = DataConfig::Source::toy;
  } else if (source == "manifest") {
    d.source = DataConfig::Source::manifest;
  } else {
    throw ConfigError("data.source must be 'toy' or 'manifest', got '" + source + "'", "data.source");
  }
  std::vector<std::string> sets = kv.has("data.eval_sets") ? kv.get_list("data.eval_sets") : std::vector<std::string>{"test"};
  if (d.source == DataConfig::Source::toy) {
    auto& t = d.toy;
    t.vocab_size = get_size(kv, "data.toy.vocab_size", t.vocab_size);
    t.label_len_min = get_size(kv, "data.toy.label_len_min", t.label_len_min);
    t.label_len_max = get_size(kv, "data.toy.label_len_max", t.label_len_max);
    t.frames_per_label = get_size(kv, "data.toy.frames_per_label", t.frames_per_label);
    t.noise_std = kv.get_double("data.toy.noise_std", t.noise_std);
    t.synthesizer_seed = static_cast<std::uint64_t>(kv.get_int("data.toy.synthesizer_seed", 1));
    t.feature_dim = get_size(kv, "data.toy.feature_dim", t.feature_dim);
    t.validate();
    d.train_utterances = get_size(kv, "data.toy.train_utterances", d.train_utterances);
    d.train_seed = static_cast<std::uint64_t>(kv.get_int("data.toy.train_seed", static_cast<std::int64_t>(d.train_seed)));
    d.dev_utterances = get_size(kv, "data.toy.dev_utterances", d.dev_utterances);
    d.dev_seed = static_cast<std::uint64_t>(kv.get_int("data.toy.dev_seed", static_cast<std::int64_t>(d.dev_seed)));
    std::uint64_t next_seed = 1001;
    for (const auto& name : sets) {
      EvalSetConfig e;
      e.name = name;
      e.utterances = get_size(kv, "data.toy.eval." + name + ".utterances", 200);
      e.seed = static_cast<std::uint64_t>(kv.get_int("data.toy.eval." + name + ".seed", static_cast<std::int64_t>(next_seed)));
      ++next_seed;
      d.eval_sets.push_back(e);
    }
  } else {
    d.train_manifest = kv.get_string("data.train_manifest");
    d.dev_manifest = kv.get_string("data.dev_manifest", "");
    for (const auto& name : sets) {
      EvalSetConfig e;
      e.name = name;
      e.manifest = kv.get_string("data.eval." + name + ".manifest");
      d.eval_sets.push_back(e);
    }
  }
  if (d.eval_sets.empty()) throw ConfigError("data.eval_sets must name at least one set", "data.eval_sets");
  return d;
}

LoadedData load_data(const DataConfig& d) {
  LoadedData out;
  if (d.source == DataConfig::Source::toy) {
    auto gen = [&](std::size_t n, std::uint64_t seed, const std::string& prefix) {
      frontend::ToyCorpusSpec s = d.toy;
      s.num_utterances = n;
      s.utterance_seed = seed;
      s.id_prefix = prefix;
      return n == 0 ? frontend::Dataset{} : frontend::generate_toy_corpus(s);
    };
    out.train = gen(d.train_utterances, d.train_seed, "train");
    out.dev = gen(d.dev_utterances, d.dev_seed, "dev");
    for (const auto& e : d.eval_sets) out.eval_sets.emplace_back(e.name, gen(e.utterances, e.seed, e.name));
  } else {
    out.train = frontend::load_dataset(d.train_manifest);
    if (!d.dev_manifest.empty()) out.dev = frontend::load_dataset(d.dev_manifest);
    for (const auto& e : d.eval_sets) out.eval_sets.emplace_back(e.name, frontend::load_dataset(e.manifest));
  }
  return out;
}

void PipelineConfig::validate() const {
  if (stages.empty()) throw ConfigError("pipeline needs at least one stage", "pipeline.stages");
  if (seeds.empty()) throw ConfigError("pipeline.seeds must not be empty", "pipeline.seeds");
  if (beam_size == 0) throw ConfigError("pipeline.beam_size must be positive", "pipeline.beam_size");
  if (stages.front().teacher_source.kind == TeacherSource::Kind::previous_stage) {
    throw ConfigError("stage 1 cannot take its teacher from a previous stage", "stage1.teacher_source");
  }
  std::optional<std::uint64_t> previous;
  if (!original_teacher_checkpoint) previous = model::count_parameters(teacher.model).total();
  for (const auto& s : stages) {
    const std::string key = "stage" + std::to_string(s.stage_id) + ".model";
    const auto n = model::count_parameters(s.train.model).total();
    if (previous && n >= *previous) {
      throw ConfigError("stage " + std::to_string(s.stage_id) + " student has " + std::to_string(n) +
                            " parameters, not fewer than the previous model's " + std::to_string(*previous),
                        key);
    }
    if (s.train.model.vocab_size != teacher.model.vocab_size) {
      throw ConfigError("stage " + std::to_string(s.stage_id) + " vocab_size differs from the teacher's", key);
    }
    previous = n;
  }
}

PipelineConfig PipelineConfig::from_keyvalues(const KeyValues& kv) {
  PipelineConfig p;
  p.name = kv.get_string("pipeline.name", p.name);
  if (kv.has("pipeline.seeds")) {
    p.seeds.clear();
    for (auto s : kv.get_int_list("pipeline.seeds")) p.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  // `seeds` is accepted as a short alias on the command line.
  if (kv.has("seeds")) {
    p.seeds.clear();
    for (auto s : kv.get_int_list("seeds")) p.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  p.out_dir = kv.get_string("pipeline.out_dir", p.out_dir);
  p.beam_size = get_size(kv, "pipeline.beam_size", p.beam_size);
  p.data = DataConfig::from_keyvalues(kv);

  const train::TrainConfig defaults = train::TrainConfig::from_keyvalues(kv, "");
  if (kv.has("teacher.checkpoint")) p.original_teacher_checkpoint = kv.get_string("teacher.checkpoint");
  p.teacher = train::TrainConfig::from_keyvalues(kv, "teacher.", defaults);
  p.teacher.mode = train::TrainMode::scratch;
  p.teacher.teacher_checkpoint.reset();
  if (p.teacher.model.vocab_size != p.data.toy.vocab_size && p.data.source == DataConfig::Source::toy) {
    throw ConfigError("teacher.model.vocab_size must equal data.toy.vocab_size", "teacher.model.vocab_size");
  }

  const std::size_t count = get_size(kv, "pipeline.stages", 0);
  if (count == 0) throw ConfigError("pipeline.stages must be at least 1", "pipeline.stages");
  for (std::size_t i = 1; i <= count; ++i) {
    const std::string s = "stage" + std::to_string(i) + ".";
    StageConfig st;
    st.stage_id = i;
    st.teacher_source = parse_source(kv.get_string(s + "teacher_source", i == 1 ? "original" : "previous_stage"));
    train::TrainConfig base = defaults;
    base.model = p.teacher.model;
    st.train = train::TrainConfig::from_keyvalues(kv, s, base);
    st.train.mode = train::TrainMode::distill;
    st.also_train_scratch_baseline = kv.get_bool(s + "baseline", true);
    st.also_train_from_original_teacher = kv.get_bool(s + "from_original", true);
    p.stages.push_back(std::move(st));
  }
  p.naming.teacher_index_start = get_size(kv, "report.teacher_index_start", p.naming.teacher_index_start);
  p.naming.baseline_index_start = get_size(kv, "report.baseline_index_start", p.naming.baseline_index_start);
  p.naming.student_index_start = get_size(kv, "report.student_index_start", p.naming.student_index_start);
  kv.reject_unused();
  p.validate();
  return p;
}

}  // namespace ctkd::pipeline
