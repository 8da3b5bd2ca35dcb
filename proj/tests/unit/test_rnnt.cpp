#include <doctest.h>

#include <cmath>

#include "ctkd/common/errors.hpp"
#include "ctkd/rnnt/rnnt_loss.hpp"
#include "helpers.hpp"

using namespace ctkd;
using namespace ctkd::rnnt;

TEST_CASE("single frame single label uniform lattice") {
  const Lattice lat = test::uniform_lattice(1, 1, 2);
  const TokenSeq labels{1};
  CHECK(rnnt_loss(lat, labels).loss == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  CHECK(rnnt_loss(lat, labels).loss == doctest::Approx(2.1972).epsilon(1e-4));
  const auto oracle = enumerate_alignments_oracle(lat, labels);
  CHECK(oracle.paths == 1);
  CHECK(oracle.loss == doctest::Approx(std::log(9.0)).epsilon(1e-12));
}

TEST_CASE("two frames one label uniform lattice") {
  const Lattice lat = test::uniform_lattice(2, 1, 2);
  const TokenSeq labels{2};
  const double expected = -std::log(2.0 / 27.0);
  CHECK(rnnt_loss(lat, labels).loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(2.6027).epsilon(1e-4));
  CHECK(enumerate_alignments_oracle(lat, labels).paths == 2);
}

TEST_CASE("empty label sequence takes the all-blank path") {
  std::mt19937_64 rng(1);
  const Lattice lat = test::random_lattice(2, 0, 3, rng);
  const double expected = -lat.at(0, 0, 0) - lat.at(1, 0, 0);
  CHECK(rnnt_loss(lat, {}).loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("path count is the binomial coefficient") {
  std::mt19937_64 rng(2);
  const TokenSeq labels{1, 2};
  CHECK(enumerate_alignments_oracle(test::random_lattice(3, 2, 2, rng), labels).paths == 6);
  const TokenSeq five{1, 1, 1, 1, 1};
  CHECK(enumerate_alignments_oracle(test::random_lattice(6, 5, 1, rng), five).paths == 252);
}

TEST_CASE("forward-backward agrees with enumeration on random instances") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> T(1, 4), U(0, 3), V(1, 3);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t t = static_cast<std::size_t>(T(rng)), u = static_cast<std::size_t>(U(rng)),
                      v = static_cast<std::size_t>(V(rng));
    std::uniform_int_distribution<Token> lab(1, static_cast<Token>(v));
    TokenSeq labels(u);
    for (auto& y : labels) y = lab(rng);
    const Lattice lat = test::random_lattice(t, u, v, rng);
    worst = std::max(worst, std::abs(rnnt_loss(lat, labels).loss - enumerate_alignments_oracle(lat, labels).loss));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("gradient is the negated edge occupancy") {
  // Blank and label edges out of each node carry the posterior mass of the
  // paths using them; the total occupancy over all edges equals the number of
  // emissions per path, T + U.
  std::mt19937_64 rng(4);
  const Lattice lat = test::random_lattice(4, 2, 3, rng);
  const TokenSeq labels{3, 1};
  const auto r = rnnt_loss(lat, labels);
  double total = 0.0;
  for (double g : r.grad_log_probs) {
    CHECK(g <= 0.0);
    total += g;
  }
  CHECK(-total == doctest::Approx(6.0).epsilon(1e-10));
}

TEST_CASE("gradient matches finite differences through the softmax") {
  std::mt19937_64 rng(5);
  const std::size_t T = 3, U = 2, V = 2;
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> logits(T * (U + 1) * (V + 1));
  for (auto& x : logits) x = n(rng);
  const TokenSeq labels{2, 1};
  const auto base = Lattice::from_logits(T, U, V, logits);
  const auto r = rnnt_loss(base, labels);
  const std::size_t S = V + 1;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    // dL/dz_k = g_k - p_k * sum_j g_j at the node of i.
    const std::size_t node = i / S;
    double gsum = 0.0;
    for (std::size_t j = 0; j < S; ++j) gsum += r.grad_log_probs[node * S + j];
    const double analytic = r.grad_log_probs[i] - std::exp(base.log_probs[i]) * gsum;
    auto plus = logits, minus = logits;
    plus[i] += 1e-5, minus[i] -= 1e-5;
    const double numeric = (rnnt_loss(Lattice::from_logits(T, U, V, plus), labels).loss -
                            rnnt_loss(Lattice::from_logits(T, U, V, minus), labels).loss) /
                           2e-5;
    CHECK(std::abs(analytic - numeric) <= 1e-4 * std::max({std::abs(analytic), std::abs(numeric), 1e-5}));
  }
}

TEST_CASE("loss input errors") {
  const Lattice lat = test::uniform_lattice(2, 1, 2);
  const TokenSeq out_of_range{3};
  CHECK_THROWS_AS(rnnt_loss(lat, out_of_range), InputError);
  const TokenSeq blank{0};
  CHECK_THROWS_AS(rnnt_loss(lat, blank), InputError);
  const TokenSeq wrong_length{1, 1};
  CHECK_THROWS(rnnt_loss(lat, wrong_length));
  const Lattice empty(0, 1, 2, {});
  const TokenSeq one{1};
  CHECK_THROWS_AS(rnnt_loss(empty, one), InputError);
}

TEST_CASE("oracle guard") {
  std::mt19937_64 rng(6);
  const TokenSeq labels{1};
  CHECK_THROWS_AS(enumerate_alignments_oracle(test::random_lattice(7, 1, 1, rng), labels), ContractError);
  const TokenSeq six{1, 1, 1, 1, 1, 1};
  CHECK_THROWS_AS(enumerate_alignments_oracle(test::random_lattice(2, 6, 1, rng), six), ContractError);
}

TEST_CASE("lattice normalisation") {
  std::mt19937_64 rng(7);
  const Lattice lat = test::random_lattice(3, 2, 4, rng, 5.0);
  CHECK(lat.max_normalization_error() < 1e-12);
  CHECK_THROWS(Lattice(2, 1, 2, std::vector<double>(5, 0.0)));
}
