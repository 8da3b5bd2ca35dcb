#include <doctest.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "ctkd/common/errors.hpp"
#include "ctkd/eval/decode.hpp"
#include "ctkd/eval/metrics.hpp"
#include "ctkd/frontend/toy_corpus.hpp"
#include "ctkd/model/transducer.hpp"
#include "helpers.hpp"

using namespace ctkd;
using namespace ctkd::eval;

namespace {

/// Scorer defined by a function of (t, prefix).
class FunctionScorer : public DecodingScorer {
 public:
  using Fn = std::function<std::vector<double>(std::size_t, std::span<const Token>)>;
  FunctionScorer(std::size_t frames, std::size_t vocab, Fn fn) : frames_(frames), vocab_(vocab), fn_(std::move(fn)) {}
  std::size_t frames() const override { return frames_; }
  std::size_t vocab() const override { return vocab_; }
  std::vector<double> log_probs(std::size_t t, std::span<const Token> prefix) override { return fn_(t, prefix); }

 private:
  std::size_t frames_, vocab_;
  Fn fn_;
};

std::vector<double> normalise(std::vector<double> logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double v : logits) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (auto& v : logits) v -= lse;
  return logits;
}

/// Pseudo-random but fixed distribution per (t, prefix).
FunctionScorer random_scorer(std::size_t frames, std::size_t vocab, std::uint64_t seed, double spread = 2.0) {
  return FunctionScorer(frames, vocab, [=](std::size_t t, std::span<const Token> prefix) {
    std::uint64_t h = seed * 0x9e3779b97f4a7c15ULL + t + 1;
    for (Token y : prefix) h = (h ^ static_cast<std::uint64_t>(y + 7)) * 0x100000001b3ULL;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> n(0.0, spread);
    std::vector<double> logits(vocab + 1);
    for (auto& v : logits) v = n(rng);
    return normalise(logits);
  });
}

}  // namespace

TEST_CASE("greedy on an always-blank scorer is empty") {
  FunctionScorer s(5, 3, [](std::size_t, std::span<const Token>) { return normalise({5.0, 0.0, 0.0, 0.0}); });
  CHECK(greedy_decode(s).tokens.empty());
  CHECK(beam_decode(s).tokens.empty());
}

TEST_CASE("greedy follows a label then blank chain") {
  FunctionScorer s(1, 3, [](std::size_t, std::span<const Token> prefix) {
    return prefix.empty() ? normalise({0.0, 0.0, 4.0, 0.0}) : normalise({4.0, 0.0, 0.0, 0.0});
  });
  const Hypothesis h = greedy_decode(s);
  CHECK(h.tokens == TokenSeq{2});
  const auto first = normalise({0.0, 0.0, 4.0, 0.0});
  const auto second = normalise({4.0, 0.0, 0.0, 0.0});
  CHECK(h.log_score == doctest::Approx(first[2] + second[0]));
}

TEST_CASE("per-frame cap ends the frame") {
  FunctionScorer s(3, 2, [](std::size_t, std::span<const Token>) { return normalise({0.0, 3.0, 0.0}); });
  const Hypothesis h = greedy_decode(s, 4);
  CHECK(h.tokens.size() == 12);
  const Hypothesis b = beam_decode(s, {4, 4});
  CHECK(b.tokens.size() == 12);
  CHECK(b.log_score == doctest::Approx(h.log_score));
}

TEST_CASE("beam of one equals greedy") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto s = random_scorer(6, 3, seed, 1.5);
    const Hypothesis g = greedy_decode(s, 3);
    const Hypothesis b = beam_decode(s, {1, 3});
    CHECK(b.tokens == g.tokens);
    CHECK(b.log_score == doctest::Approx(g.log_score).epsilon(1e-12));
  }
}

TEST_CASE("beam search matches exhaustive search when nothing is pruned") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t T = 1 + seed % 3, V = 1 + seed % 3, cap = 1 + seed % 2;
    auto s = random_scorer(T, V, seed + 100, 1.0);
    const Hypothesis ex = exhaustive_decode(s, cap);
    const Hypothesis b = beam_decode(s, {5000, cap});
    CAPTURE(seed);
    CHECK(b.tokens == ex.tokens);
    CHECK(b.log_score == doctest::Approx(ex.log_score).epsilon(1e-10));
  }
}

TEST_CASE("exhaustive search guard") {
  auto s = random_scorer(10, 3, 1);
  CHECK_THROWS_AS(exhaustive_decode(s, 3), ContractError);
}

TEST_CASE("model scorer: beam dominates greedy and agrees with exhaustive search") {
  model::ModelConfig cfg = test::tiny_config();
  cfg.encoder.pooling_layers = 1;
  const model::ConformerTransducer m(cfg, 21);
  frontend::ToyCorpusSpec spec;
  spec.vocab_size = 3;
  spec.feature_dim = 6;
  spec.label_len_min = 1;
  spec.label_len_max = 3;
  spec.frames_per_label = 2;
  spec.num_utterances = 100;
  const auto data = frontend::generate_toy_corpus(spec);
  for (const auto& u : data) {
    TransducerScorer a(m, u.features), b(m, u.features);
    const Hypothesis g = greedy_decode(a, 10);
    const Hypothesis bm = beam_decode(b, {8, 10});
    CHECK(bm.log_score >= g.log_score - 1e-12);
  }
  // Three encoder frames, three labels: every alignment fits in the beam.
  frontend::ToyCorpusSpec small = spec;
  small.num_utterances = 10;
  small.label_len_min = small.label_len_max = 3;
  for (const auto& u : frontend::generate_toy_corpus(small)) {
    TransducerScorer a(m, u.features), b(m, u.features);
    REQUIRE(a.frames() == 3);
    const Hypothesis ex = exhaustive_decode(a, 2);
    const Hypothesis bm = beam_decode(b, {3000, 2});
    CHECK(bm.tokens == ex.tokens);
    CHECK(bm.log_score == doctest::Approx(ex.log_score).epsilon(1e-10));
  }
}

TEST_CASE("model overloads agree with the scorer overloads") {
  const model::ConformerTransducer m(test::tiny_config(), 22);
  std::mt19937_64 rng(3);
  const auto f = test::random_features(16, 6, rng);
  TransducerScorer s(m, f);
  CHECK(greedy_decode(m, f).tokens == greedy_decode(s).tokens);
  TransducerScorer s2(m, f);
  CHECK(beam_decode(m, f).tokens == beam_decode(s2).tokens);
}

TEST_CASE("word error rate cases") {
  CHECK(word_error_rate({1, 2, 3}, {1, 2, 3}).percent == 0.0);
  const auto sub = word_error_rate({1, 2, 3}, {1, 9, 3});
  CHECK(sub.percent == doctest::Approx(100.0 / 3.0));
  CHECK(format_percent(sub.percent) == "33.33");
  CHECK(sub.counts.substitutions == 1);
  const auto del = word_error_rate({1, 2, 3, 4}, {});
  CHECK(del.percent == 100.0);
  CHECK(del.counts.deletions == 4);
  const auto ins = word_error_rate({1}, {1, 2, 3, 4});
  CHECK(ins.percent == 300.0);
  CHECK(ins.counts.insertions == 3);
  CHECK_THROWS_AS(word_error_rate({}, {1}), ContractError);
}

TEST_CASE("corpus scoring") {
  const std::vector<ScoredUtterance> batch{
      {"a", {1, 2, 3}, {1, 2, 3}},
      {"b", {1, 2}, {1}},
      {"c", {}, {4}},
      {"d", {3, 3, 3, 3, 3}, {3, 3, 2, 3, 3}},
  };
  const CorpusScore s = score_corpus(batch);
  CHECK(s.utterances == 3);
  CHECK(s.excluded == 1);
  CHECK(s.totals.reference_length == 10);
  CHECK(s.wer_percent == doctest::Approx(20.0));
  CHECK(s.ser_percent == doctest::Approx(200.0 / 3.0));
  std::ostringstream out;
  write_evaluation(out, batch, s);
  CHECK(out.str().find("# summary") != std::string::npos);
  CHECK(out.str().find("20.00") != std::string::npos);
}

TEST_CASE("sentence error rate") {
  const std::vector<ScoredUtterance> batch{{"a", {1}, {1}}, {"b", {1}, {2}}};
  CHECK(sentence_error_rate(batch) == 50.0);
}
