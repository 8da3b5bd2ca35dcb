// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "ctkd/common/types.hpp"
#include "ctkd/diffcore/tape.hpp"
#include "ctkd/eval/metrics.hpp"
#include "ctkd/frontend/features.hpp"
#include "ctkd/model/transducer.hpp"

namespace ctkd::eval {

/// Source of per-node output distributions for the decoders: ln P(k | t, prefix).
class DecodingScorer {
 public:
  virtual ~DecodingScorer() = default;
  virtual std::size_t frames() const = 0;
  virtual std::size_t vocab() const = 0;  // excluding blank
  /// V+1 log-probabilities, index 0 = blank.
  virtual std::vector<double> log_probs(std::size_t t, std::span<const Token> prefix) = 0;
};

/// Scorer backed by a transducer in eval mode. The encoder runs once;
/// prediction states are cached per label prefix.
class TransducerScorer : public DecodingScorer {
 public:
  TransducerScorer(const model::ConformerTransducer& model, const frontend::FeatureMatrix& features);
  std::size_t frames() const override { return frames_; }
  std::size_t vocab() const override { return model_.config().vocab_size; }
  std::vector<double> log_probs(std::size_t t, std::span<const Token> prefix) override;

 private:
  struct PrefixEntry {
    model::PredictorState state;
    ad::Tensor output;  // 1 x hidden
  };
  const PrefixEntry& entry(std::span<const Token> prefix);

  const model::ConformerTransducer& model_;
  ad::Tape tape_;
  ad::Tensor encoded_;
  std::vector<ad::Tensor> frame_rows_;
  std::size_t frames_ = 0;
  std::map<TokenSeq, PrefixEntry> cache_;
};

struct DecodeOptions {
  std::size_t beam_size = 8;
  std::size_t max_symbols_per_frame = 10;
};

struct Hypothesis {
  TokenSeq tokens;
  double log_score = 0.0;
};

/// Per frame: emit the argmax symbol while it is not blank, at most
/// max_symbols_per_frame times, then move to the next frame. Ties go to the
/// lower index, so blank wins ties. The score is the sum of the chosen
/// log-probabilities.
Hypothesis greedy_decode(DecodingScorer& scorer, std::size_t max_symbols_per_frame = 10);
Hypothesis greedy_decode(const model::ConformerTransducer& model, const frontend::FeatureMatrix& features,
                         std::size_t max_symbols_per_frame = 10);

/// Transducer beam search with prefix merging. Within a frame, hypotheses
/// expand level by level (one more label per level); ending the frame with
/// blank moves a hypothesis to the next-frame set, where equal label sequences
/// merge by log-add. After each level the next-frame set and the new
/// extensions are pruned jointly to beam_size. A hypothesis that reaches
/// max_symbols_per_frame labels in a frame moves on without a blank.
/// Returns the best hypothesis after the last frame.
Hypothesis beam_decode(DecodingScorer& scorer, const DecodeOptions& options = {});
Hypothesis beam_decode(const model::ConformerTransducer& model, const frontend::FeatureMatrix& features,
                       const DecodeOptions& options = {});

/// Exhaustive search over every alignment under the same per-frame cap,
/// merging alignments by label sequence. Guarded to at most 200000
/// alignments.
Hypothesis exhaustive_decode(DecodingScorer& scorer, std::size_t max_symbols_per_frame);

struct Evaluation {
  std::vector<ScoredUtterance> utterances;
  CorpusScore score;
};

/// Decodes every utterance (greedy when beam_size == 1) and scores it.
Evaluation evaluate_dataset(const model::ConformerTransducer& model, const frontend::Dataset& data,
                            const DecodeOptions& options = {});

}  // namespace ctkd::eval
