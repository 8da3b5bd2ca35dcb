#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ctkd/common/errors.hpp"
#include "ctkd/distill/kd_loss.hpp"
#include "helpers.hpp"

using namespace ctkd;
using namespace ctkd::distill;
using rnnt::Lattice;

TEST_CASE("KL of identical lattices is zero") {
  std::mt19937_64 rng(1);
  const Lattice a = test::random_lattice(3, 2, 4, rng);
  CHECK(kd_loss(a, a).loss == 0.0);
}

TEST_CASE("single-node KL value") {
  const Lattice teacher(1, 0, 1, {std::log(0.75), std::log(0.25)});
  const Lattice student(1, 0, 1, {std::log(0.5), std::log(0.5)});
  const double expected = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  const auto r = kd_loss(teacher, student);
  CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(0.130812).epsilon(1e-6));
  CHECK(r.grad_student_log_probs[0] == doctest::Approx(-0.75));
  CHECK(r.grad_student_log_probs[1] == doctest::Approx(-0.25));
  CHECK(r.grad_student_logits[0] == doctest::Approx(0.5 - 0.75));
  CHECK(r.grad_student_logits[1] == doctest::Approx(0.5 - 0.25));
}

TEST_CASE("KL sums over nodes") {
  const double lt[] = {std::log(0.75), std::log(0.25)};
  const double ls[] = {std::log(0.5), std::log(0.5)};
  const Lattice t1(1, 0, 1, {lt[0], lt[1]}), s1(1, 0, 1, {ls[0], ls[1]});
  const Lattice t2(2, 0, 1, {lt[0], lt[1], lt[0], lt[1]}), s2(2, 0, 1, {ls[0], ls[1], ls[0], ls[1]});
  CHECK(kd_loss(t2, s2).loss == doctest::Approx(2.0 * kd_loss(t1, s1).loss).epsilon(1e-12));
}

TEST_CASE("KL is non-negative and logit gradient matches finite differences") {
  std::mt19937_64 rng(2);
  const std::size_t T = 2, U = 1, V = 3, S = V + 1;
  const Lattice teacher = test::random_lattice(T, U, V, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> logits(T * (U + 1) * S);
  for (auto& x : logits) x = n(rng);
  const auto r = kd_loss(teacher, Lattice::from_logits(T, U, V, logits));
  CHECK(r.loss > 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto p = logits, m = logits;
    p[i] += 1e-5, m[i] -= 1e-5;
    const double numeric = (kd_loss(teacher, Lattice::from_logits(T, U, V, p)).loss -
                            kd_loss(teacher, Lattice::from_logits(T, U, V, m)).loss) /
                           2e-5;
    CHECK(r.grad_student_logits[i] == doctest::Approx(numeric).epsilon(1e-6));
  }
}

TEST_CASE("KL shape mismatch") {
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(kd_loss(test::random_lattice(2, 1, 2, rng), test::random_lattice(2, 2, 2, rng)), ShapeError);
  CHECK_THROWS_AS(kd_loss(test::random_lattice(2, 1, 2, rng), test::random_lattice(2, 1, 3, rng)), ShapeError);
}

TEST_CASE("total loss combination") {
  DistillationConfig cfg;
  CHECK(total_loss(2.0, 0.5, cfg).total == doctest::Approx(1.97).epsilon(1e-12));
  cfg.alpha = 0.0;
  CHECK(total_loss(2.0, 0.5, cfg).total == 2.0);
  cfg.alpha = 1.0;
  CHECK(total_loss(2.0, 0.5, cfg).total == 0.5);
  cfg.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.alpha = 0.5;
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("tempered lattice flattens the distribution") {
  const std::vector<double> logits{2.0, -1.0, 0.5};
  const Lattice t1 = tempered_lattice(1, 0, 2, logits, 1.0);
  const Lattice t2 = tempered_lattice(1, 0, 2, logits, 2.0);
  CHECK(t1.log_probs == Lattice::from_logits(1, 0, 2, logits).log_probs);
  const auto range = [](const Lattice& l) {
    return *std::max_element(l.log_probs.begin(), l.log_probs.end()) -
           *std::min_element(l.log_probs.begin(), l.log_probs.end());
  };
  CHECK(range(t2) < range(t1));
  CHECK(t2.max_normalization_error() < 1e-12);
}
