// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ctkd/common/types.hpp"
#include "ctkd/rnnt/lattice.hpp"

namespace ctkd::rnnt {

struct LossResult {
  /// -ln P(labels | lattice), natural log.
  double loss = 0.0;
  /// d loss / d log_probs, same layout as Lattice::log_probs.
  std::vector<double> grad_log_probs;
};

/// Transducer negative log-likelihood by the forward-backward recursion.
///
/// From node (t,u) a path either emits label u+1 and moves to (t,u+1) or
/// emits blank and moves to (t+1,u); it terminates with the blank emitted at
/// (T-1,U). The gradient is the negated posterior occupancy of each edge.
LossResult rnnt_loss(const Lattice& lattice, std::span<const Token> labels);

struct OracleResult {
  double loss = 0.0;
  std::size_t paths = 0;
};

/// Explicitly walks every monotone alignment and sums path probabilities in
/// linear space. Guarded to T <= 6, U <= 5.
OracleResult enumerate_alignments_oracle(const Lattice& lattice, std::span<const Token> labels);

}  // namespace ctkd::rnnt
