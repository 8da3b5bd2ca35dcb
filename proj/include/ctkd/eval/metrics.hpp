// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctkd/common/types.hpp"

namespace ctkd::eval {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  ErrorCounts& operator+=(const ErrorCounts& o);
};

/// Unit-cost Levenshtein alignment of hyp against ref.
ErrorCounts align(const TokenSeq& reference, const TokenSeq& hypothesis);

struct WerResult {
  double percent = 0.0;
  ErrorCounts counts;
};

/// 100 * (S+I+D) / |ref|. An empty reference throws ContractError.
WerResult word_error_rate(const TokenSeq& reference, const TokenSeq& hypothesis);

struct ScoredUtterance {
  std::string id;
  TokenSeq reference;
  TokenSeq hypothesis;
};

struct CorpusScore {
  double wer_percent = 0.0;  // total errors / total reference tokens
  double ser_percent = 0.0;  // utterances with any error
  ErrorCounts totals;
  std::size_t utterances = 0;
  std::size_t excluded = 0;  // empty references, not scored
};

/// Percentage of utterances whose hypothesis differs from the reference.
double sentence_error_rate(const std::vector<ScoredUtterance>& batch);
CorpusScore score_corpus(const std::vector<ScoredUtterance>& batch);

/// Rounds to two decimals for display.
std::string format_percent(double percent);

/// One `id<TAB>reference<TAB>hypothesis<TAB>wer` line per utterance followed
/// by a summary block.
void write_evaluation(std::ostream& out, const std::vector<ScoredUtterance>& batch, const CorpusScore& score);

}  // namespace ctkd::eval
