// SPDX-License-Identifier: Apache-2.0
#include "ctkd/eval/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "ctkd/common/errors.hpp"

namespace ctkd::eval {
namespace {

std::string join(const TokenSeq& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(s[i]);
  }
  return out;
}

}  // namespace

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  reference_length += o.reference_length;
  return *this;
}

ErrorCounts align(const TokenSeq& ref, const TokenSeq& hyp) {
  // cost table with back-pointers recovered by recomputation
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      d[i][j] = std::min({sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  ErrorCounts c;
  c.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

WerResult word_error_rate(const TokenSeq& reference, const TokenSeq& hypothesis) {
  if (reference.empty()) throw ContractError("word_error_rate: empty reference");
  WerResult r;
  r.counts = align(reference, hypothesis);
  r.percent = 100.0 * static_cast<double>(r.counts.errors()) / static_cast<double>(reference.size());
  return r;
}

double sentence_error_rate(const std::vector<ScoredUtterance>& batch) { return score_corpus(batch).ser_percent; }

CorpusScore score_corpus(const std::vector<ScoredUtterance>& batch) {
  CorpusScore s;
  std::size_t wrong = 0;
  for (const auto& u : batch) {
    if (u.reference.empty()) {
      ++s.excluded;
      continue;
    }
    const ErrorCounts c = align(u.reference, u.hypothesis);
    s.totals += c;
    if (c.errors() > 0) ++wrong;
    ++s.utterances;
  }
  if (s.utterances > 0) {
    s.wer_percent = 100.0 * static_cast<double>(s.totals.errors()) / static_cast<double>(s.totals.reference_length);
    s.ser_percent = 100.0 * static_cast<double>(wrong) / static_cast<double>(s.utterances);
  }
  return s;
}

std::string format_percent(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", percent);
  return buf;
}

void write_evaluation(std::ostream& out, const std::vector<ScoredUtterance>& batch, const CorpusScore& score) {
  for (const auto& u : batch) {
    out << u.id << '\t' << join(u.reference) << '\t' << join(u.hypothesis) << '\t';
    if (u.reference.empty()) {
      out << "excluded\n";
    } else {
      out << format_percent(word_error_rate(u.reference, u.hypothesis).percent) << '\n';
    }
  }
  out << "# summary\n"
      << "wer\t" << format_percent(score.wer_percent) << '\n'
      << "ser\t" << format_percent(score.ser_percent) << '\n'
      << "utterances\t" << score.utterances << '\n'
      << "excluded\t" << score.excluded << '\n'
      << "substitutions\t" << score.totals.substitutions << '\n'
      << "insertions\t" << score.totals.insertions << '\n'
      << "deletions\t" << score.totals.deletions << '\n'
      << "reference_tokens\t" << score.totals.reference_length << '\n';
}

}  // namespace ctkd::eval
