// SPDX-License-Identifier: Apache-2.0
#include "ctkd/rnnt/rnnt_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctkd/common/errors.hpp"

namespace ctkd::rnnt {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void validate(const Lattice& lattice, std::span<const Token> labels) {
  if (lattice.frames == 0) throw InputError("rnnt_loss: lattice has no frames");
  if (labels.size() != lattice.labels) {
    throw ShapeError("rnnt_loss: lattice built for " + std::to_string(lattice.labels) + " labels, got " +
                     std::to_string(labels.size()));
  }
  if (lattice.log_probs.size() != lattice.nodes() * lattice.symbols()) {
    throw ShapeError("rnnt_loss: lattice storage does not match T x (U+1) x (V+1)");
  }
  for (Token y : labels) {
    if (y < 1 || static_cast<std::size_t>(y) > lattice.vocab) {
      throw InputError("rnnt_loss: label " + std::to_string(y) + " outside [1," + std::to_string(lattice.vocab) + "]");
    }
  }
}

}  // namespace

Lattice::Lattice(std::size_t t, std::size_t u, std::size_t v, std::vector<double> values)
    : frames(t), labels(u), vocab(v), log_probs(std::move(values)) {
  if (log_probs.size() != t * (u + 1) * (v + 1)) {
    throw ShapeError("lattice storage does not match T x (U+1) x (V+1)");
  }
}

Lattice Lattice::from_logits(std::size_t t, std::size_t u, std::size_t v, const std::vector<double>& logits) {
  Lattice lat(t, u, v, logits);
  const std::size_t k = v + 1;
  for (std::size_t n = 0; n < lat.nodes(); ++n) {
    double* row = lat.log_probs.data() + n * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) row[j] -= lz;
  }
  return lat;
}

double Lattice::max_normalization_error() const {
  double worst = 0.0;
  const std::size_t k = symbols();
  for (std::size_t n = 0; n < nodes(); ++n) {
    double z = kNegInf;
    for (std::size_t j = 0; j < k; ++j) z = log_add(z, log_probs[n * k + j]);
    worst = std::max(worst, std::abs(z));
  }
  return worst;
}

LossResult rnnt_loss(const Lattice& lattice, std::span<const Token> labels) {
  validate(lattice, labels);
  const std::size_t T = lattice.frames, U = lattice.labels;
  auto blank = [&](std::size_t t, std::size_t u) { return lattice.at(t, u, 0); };
  auto emit = [&](std::size_t t, std::size_t u) {
    return lattice.at(t, u, static_cast<std::size_t>(labels[u]));
  };

  // alpha(t,u): log prob of reaching node (t,u); beta(t,u): log prob of
  // finishing from (t,u), including the final blank.
  std::vector<double> alpha(T * (U + 1), kNegInf), beta(T * (U + 1), kNegInf);
  auto A = [&](std::size_t t, std::size_t u) -> double& { return alpha[t * (U + 1) + u]; };
  auto B = [&](std::size_t t, std::size_t u) -> double& { return beta[t * (U + 1) + u]; };

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) {
        A(0, 0) = 0.0;
        continue;
      }
      double v = kNegInf;
      if (t > 0) v = A(t - 1, u) + blank(t - 1, u);
      if (u > 0) v = log_add(v, A(t, u - 1) + emit(t, u - 1));
      A(t, u) = v;
    }
  }
  for (std::size_t t = T; t-- > 0;) {
    for (std::size_t u = U + 1; u-- > 0;) {
      if (t == T - 1 && u == U) {
        B(t, u) = blank(t, u);
        continue;
      }
      double v = kNegInf;
      if (t + 1 < T) v = B(t + 1, u) + blank(t, u);
      if (u < U) v = log_add(v, B(t, u + 1) + emit(t, u));
      B(t, u) = v;
    }
  }

  const double log_likelihood = A(T - 1, U) + blank(T - 1, U);
  if (!std::isfinite(log_likelihood)) throw NumericError("rnnt_loss: non-finite log-likelihood");

  LossResult result;
  result.loss = -log_likelihood;
  result.grad_log_probs.assign(lattice.log_probs.size(), 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t u = 0; u <= U; ++u) {
      const double a = A(t, u);
      double next_blank = kNegInf;
      if (t + 1 < T) {
        next_blank = B(t + 1, u);
      } else if (u == U) {
        next_blank = 0.0;  // the terminating blank
      }
      if (next_blank != kNegInf) {
        result.grad_log_probs[lattice.index(t, u, 0)] =
            -std::exp(a + blank(t, u) + next_blank - log_likelihood);
      }
      if (u < U) {
        result.grad_log_probs[lattice.index(t, u, static_cast<std::size_t>(labels[u]))] =
            -std::exp(a + emit(t, u) + B(t, u + 1) - log_likelihood);
      }
    }
  }
  return result;
}

OracleResult enumerate_alignments_oracle(const Lattice& lattice, std::span<const Token> labels) {
  if (lattice.frames > 6 || lattice.labels > 5) {
    throw ContractError("enumerate_alignments_oracle: limited to T <= 6 and U <= 5");
  }
  validate(lattice, labels);
  const std::size_t T = lattice.frames, U = lattice.labels;

  OracleResult result;
  double total = 0.0;
  // Depth-first walk over all interleavings of T-1 blanks and U labels.
  auto walk = [&](auto&& self, std::size_t t, std::size_t u, double prob) -> void {
    if (t == T - 1 && u == U) {
      total += prob * std::exp(lattice.at(t, u, 0));
      ++result.paths;
      return;
    }
    if (u < U) self(self, t, u + 1, prob * std::exp(lattice.at(t, u, static_cast<std::size_t>(labels[u]))));
    if (t + 1 < T) self(self, t + 1, u, prob * std::exp(lattice.at(t, u, 0)));
  };
  walk(walk, 0, 0, 1.0);
  result.loss = -std::log(total);
  return result;
}

}  // namespace ctkd::rnnt
