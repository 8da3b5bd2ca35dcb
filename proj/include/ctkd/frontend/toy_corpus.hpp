// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctkd/frontend/features.hpp"

namespace ctkd::frontend {

/// Synthetic stand-in for a speech corpus: every label owns a fixed random
/// feature vector, an utterance is its labels' vectors held for
/// frames_per_label frames each, plus Gaussian noise.
struct ToyCorpusSpec {
  std::size_t vocab_size = 8;  // excluding blank
  std::size_t num_utterances = 100;
  std::size_t label_len_min = 3;
  std::size_t label_len_max = 8;
  std::size_t frames_per_label = 8;
  double noise_std = 0.5;
  std::uint64_t synthesizer_seed = 1;
  std::size_t feature_dim = 40;
  /// Seed of the label/noise stream. Defaults to the synthesizer seed; give
  /// held-out sets a different value so they share the label embeddings but
  /// not the utterances.
  std::optional<std::uint64_t> utterance_seed;
  std::string id_prefix = "utt";

  void validate() const;
};

/// vocab_size x feature_dim embedding table; row k-1 belongs to label k.
std::vector<std::vector<double>> toy_label_embeddings(const ToyCorpusSpec& spec);

Dataset generate_toy_corpus(const ToyCorpusSpec& spec);

}  // namespace ctkd::frontend
