// SPDX-License-Identifier: Apache-2.0
#include "ctkd/eval/decode.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <tuple>

#include "ctkd/common/errors.hpp"
#include "ctkd/diffcore/ops.hpp"

namespace ctkd::eval {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

void merge(std::map<TokenSeq, double>& into, const TokenSeq& seq, double score) {
  auto [it, inserted] = into.emplace(seq, score);
  if (!inserted) it->second = log_add(it->second, score);
}

void check_cap(std::size_t cap) {
  if (cap == 0) throw ContractError("max_symbols_per_frame must be at least 1");
}

}  // namespace

// --- scorer ----------------------------------------------------------------

TransducerScorer::TransducerScorer(const model::ConformerTransducer& model, const frontend::FeatureMatrix& features)
    : model_(model), tape_(std::nullopt, /*recording=*/false) {
  encoded_ = model_.encode(tape_, features, /*training=*/false);
  frames_ = encoded_.rows();
  frame_rows_.reserve(frames_);
  for (std::size_t t = 0; t < frames_; ++t) frame_rows_.push_back(ad::slice(tape_, encoded_, 0, t, t + 1));
}

const TransducerScorer::PrefixEntry& TransducerScorer::entry(std::span<const Token> prefix) {
  TokenSeq key(prefix.begin(), prefix.end());
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  PrefixEntry e;
  if (prefix.empty()) {
    e.state = model_.initial_state();
    e.output = model_.predict_step(tape_, e.state, kBlank, false);
  } else {
    e.state = entry(prefix.first(prefix.size() - 1)).state;
    e.output = model_.predict_step(tape_, e.state, prefix.back(), false);
  }
  return cache_.emplace(std::move(key), std::move(e)).first->second;
}

std::vector<double> TransducerScorer::log_probs(std::size_t t, std::span<const Token> prefix) {
  if (t >= frames_) throw ContractError("frame " + std::to_string(t) + " out of range");
  const ad::Tensor& pred = entry(prefix).output;
  ad::Tensor lp = model_.joint(tape_, frame_rows_[t], pred, 1.0);
  return {lp.data().begin(), lp.data().end()};
}

// --- greedy ----------------------------------------------------------------

Hypothesis greedy_decode(DecodingScorer& scorer, std::size_t cap) {
  check_cap(cap);
  Hypothesis h;
  for (std::size_t t = 0; t < scorer.frames(); ++t) {
    for (std::size_t emitted = 0; emitted < cap;) {
      const auto lp = scorer.log_probs(t, h.tokens);
      const auto best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
      h.log_score += lp[best];
      if (best == 0) break;
      h.tokens.push_back(static_cast<Token>(best));
      ++emitted;
    }
  }
  return h;
}

Hypothesis greedy_decode(const model::ConformerTransducer& model, const frontend::FeatureMatrix& features,
                         std::size_t cap) {
  TransducerScorer scorer(model, features);
  return greedy_decode(scorer, cap);
}

// --- beam ------------------------------------------------------------------

Hypothesis beam_decode(DecodingScorer& scorer, const DecodeOptions& options) {
  if (options.beam_size == 0) throw ContractError("beam_size must be at least 1");
  check_cap(options.max_symbols_per_frame);
  const std::size_t V = scorer.vocab();

  std::map<TokenSeq, double> current{{TokenSeq{}, 0.0}};
  for (std::size_t t = 0; t < scorer.frames(); ++t) {
    std::map<TokenSeq, double> done;  // hypotheses that finished frame t
    std::map<TokenSeq, double> level = current;
    for (std::size_t k = 0; !level.empty(); ++k) {
      std::map<TokenSeq, double> next;
      for (const auto& [seq, score] : level) {
        if (k == options.max_symbols_per_frame) {
          merge(done, seq, score);
          continue;
        }
        const auto lp = scorer.log_probs(t, seq);
        merge(done, seq, score + lp[0]);
        TokenSeq ext = seq;
        ext.push_back(0);
        for (std::size_t v = 1; v <= V; ++v) {
          ext.back() = static_cast<Token>(v);
          merge(next, ext, score + lp[v]);
        }
      }
      // Joint pruning; ties prefer finished (blank) entries, then the
      // lexicographically smaller sequence.
      struct Candidate {
        double score;
        int extension;
        const TokenSeq* seq;
      };
      std::vector<Candidate> all;
      all.reserve(done.size() + next.size());
      for (const auto& [seq, score] : done) all.push_back({score, 0, &seq});
      for (const auto& [seq, score] : next) all.push_back({score, 1, &seq});
      if (all.size() > options.beam_size) {
        std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
          return std::tie(b.score, a.extension, *a.seq) < std::tie(a.score, b.extension, *b.seq);
        });
        all.resize(options.beam_size);
      }
      std::map<TokenSeq, double> kept_done, kept_next;
      for (const auto& c : all) (c.extension ? kept_next : kept_done).emplace(*c.seq, c.score);
      done = std::move(kept_done);
      level = std::move(kept_next);
    }
    current = std::move(done);
  }
  Hypothesis best{{}, kNegInf};
  bool first = true;
  for (const auto& [seq, score] : current) {
    if (first || score > best.log_score) best = {seq, score};
    first = false;
  }
  return best;
}

Hypothesis beam_decode(const model::ConformerTransducer& model, const frontend::FeatureMatrix& features,
                       const DecodeOptions& options) {
  TransducerScorer scorer(model, features);
  return beam_decode(scorer, options);
}

// --- exhaustive ------------------------------------------------------------

Hypothesis exhaustive_decode(DecodingScorer& scorer, std::size_t cap) {
  check_cap(cap);
  const std::size_t V = scorer.vocab();
  double per_frame = 0.0, power = 1.0;
  for (std::size_t k = 0; k <= cap; ++k, power *= static_cast<double>(V)) per_frame += power;
  if (std::pow(per_frame, static_cast<double>(scorer.frames())) > 200000.0) {
    throw ContractError("exhaustive_decode: too many alignments");
  }
  std::map<TokenSeq, double> totals;
  TokenSeq seq;
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t t, std::size_t k, double score) {
    if (t == scorer.frames()) {
      merge(totals, seq, score);
      return;
    }
    if (k == cap) {
      walk(t + 1, 0, score);
      return;
    }
    const auto lp = scorer.log_probs(t, seq);
    walk(t + 1, 0, score + lp[0]);
    for (std::size_t v = 1; v <= V; ++v) {
      seq.push_back(static_cast<Token>(v));
      walk(t, k + 1, score + lp[v]);
      seq.pop_back();
    }
  };
  walk(0, 0, 0.0);
  Hypothesis best{{}, kNegInf};
  bool first = true;
  for (const auto& [s, score] : totals) {
    if (first || score > best.log_score) best = {s, score};
    first = false;
  }
  return best;
}

Evaluation evaluate_dataset(const model::ConformerTransducer& model, const frontend::Dataset& data,
                            const DecodeOptions& options) {
  Evaluation ev;
  ev.utterances.reserve(data.size());
  for (const auto& u : data) {
    Hypothesis h = options.beam_size == 1 ? greedy_decode(model, u.features, options.max_symbols_per_frame)
                                          : beam_decode(model, u.features, options);
    ev.utterances.push_back({u.id, u.labels, std::move(h.tokens)});
  }
  ev.score = score_corpus(ev.utterances);
  return ev;
}

}  // namespace ctkd::eval
