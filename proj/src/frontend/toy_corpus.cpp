// SPDX-License-Identifier: Apache-2.0
#include "ctkd/frontend/toy_corpus.hpp"

#include <cstdio>
#include <random>

#include "ctkd/common/errors.hpp"

namespace ctkd::frontend {

void ToyCorpusSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("toy corpus needs vocab_size >= 2", "data.toy.vocab_size");
  if (label_len_min > label_len_max) {
    throw ConfigError("toy corpus label_len_min exceeds label_len_max", "data.toy.label_len_min");
  }
  if (label_len_min == 0) throw ConfigError("toy corpus utterances need at least one label", "data.toy.label_len_min");
  if (frames_per_label < 1) throw ConfigError("toy corpus needs frames_per_label >= 1", "data.toy.frames_per_label");
  if (feature_dim == 0) throw ConfigError("toy corpus needs feature_dim >= 1", "data.toy.feature_dim");
  if (!(noise_std >= 0.0)) throw ConfigError("toy corpus noise_std must be non-negative", "data.toy.noise_std");
}

std::vector<std::vector<double>> toy_label_embeddings(const ToyCorpusSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.synthesizer_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> table(spec.vocab_size, std::vector<double>(spec.feature_dim));
  for (auto& row : table) {
    for (double& v : row) v = normal(rng);
  }
  return table;
}

Dataset generate_toy_corpus(const ToyCorpusSpec& spec) {
  const auto table = toy_label_embeddings(spec);
  std::mt19937_64 rng(spec.utterance_seed.value_or(spec.synthesizer_seed ^ 0x9e3779b97f4a7c15ULL));
  std::uniform_int_distribution<std::size_t> length(spec.label_len_min, spec.label_len_max);
  std::uniform_int_distribution<Token> label(1, static_cast<Token>(spec.vocab_size));
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset out;
  out.reserve(spec.num_utterances);
  for (std::size_t n = 0; n < spec.num_utterances; ++n) {
    Utterance utt;
    char id[64];
    std::snprintf(id, sizeof(id), "%s%05zu", spec.id_prefix.c_str(), n);
    utt.id = id;
    const std::size_t len = length(rng);
    for (std::size_t i = 0; i < len; ++i) utt.labels.push_back(label(rng));
    utt.features = FeatureMatrix(len * spec.frames_per_label, spec.feature_dim);
    for (std::size_t i = 0; i < len; ++i) {
      const auto& emb = table[static_cast<std::size_t>(utt.labels[i] - 1)];
      for (std::size_t r = 0; r < spec.frames_per_label; ++r) {
        const std::size_t f = i * spec.frames_per_label + r;
        for (std::size_t d = 0; d < spec.feature_dim; ++d) {
          double v = emb[d];
          if (spec.noise_std > 0.0) v += spec.noise_std * noise(rng);
          utt.features.at(f, d) = v;
        }
      }
    }
    out.push_back(std::move(utt));
  }
  return out;
}

}  // namespace ctkd::frontend
