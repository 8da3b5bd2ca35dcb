// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace ctkd::rnnt {

/// Per-node output log-distributions of a transducer for one utterance.
///
/// log_probs[(t * (U+1) + u) * (V+1) + k] = ln P(k | t, u), k = 0 is blank.
/// The layout matches the row-major [T*(U+1) x (V+1)] joint output.
struct Lattice {
  std::size_t frames = 0;  // T
  std::size_t labels = 0;  // U
  std::size_t vocab = 0;   // V, excluding blank
  std::vector<double> log_probs;

  Lattice() = default;
  Lattice(std::size_t t, std::size_t u, std::size_t v, std::vector<double> values);

  std::size_t symbols() const { return vocab + 1; }
  std::size_t nodes() const { return frames * (labels + 1); }
  std::size_t index(std::size_t t, std::size_t u, std::size_t k) const {
    return (t * (labels + 1) + u) * (vocab + 1) + k;
  }
  double at(std::size_t t, std::size_t u, std::size_t k) const { return log_probs[index(t, u, k)]; }

  /// Normalises arbitrary logits node by node (log-softmax).
  static Lattice from_logits(std::size_t t, std::size_t u, std::size_t v, const std::vector<double>& logits);
  /// Largest |logsumexp_k - 0| over all nodes.
  double max_normalization_error() const;
};

}  // namespace ctkd::rnnt
