// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "ctkd/rnnt/lattice.hpp"

namespace ctkd::distill {

struct DistillationConfig {
  double alpha = 0.02;       // weight of the KD term
  double temperature = 1.0;  // shared by teacher and student

  void validate() const;
};

struct LossBreakdown {
  double transducer_loss = 0.0;
  double kd_loss = 0.0;
  double total = 0.0;
};

struct KdResult {
  double loss = 0.0;
  /// d loss / d student log_probs = -P_teacher.
  std::vector<double> grad_student_log_probs;
  /// d loss / d student logits when log_probs = log_softmax(logits): P_student - P_teacher.
  std::vector<double> grad_student_logits;
};

/// Lattice KL divergence sum_{t,u} sum_k P_T(k|t,u) (ln P_T - ln P_S), summed
/// (not averaged) over every node. The teacher is a constant.
KdResult kd_loss(const rnnt::Lattice& teacher, const rnnt::Lattice& student);

/// (1 - alpha) * transducer + alpha * kd.
LossBreakdown total_loss(double transducer_loss, double kd_loss, const DistillationConfig& config);

/// log_softmax(logits / temperature) node by node.
rnnt::Lattice tempered_lattice(std::size_t t, std::size_t u, std::size_t v, const std::vector<double>& logits,
                               double temperature);

}  // namespace ctkd::distill
