// SPDX-License-Identifier: Apache-2.0
//
// Lattice losses as tape ops. The value and gradient come from the rnnt and
// distill modules; the op only routes the gradient back into the
// log-probability tensor.
#pragma once

#include <span>

#include "ctkd/common/types.hpp"
#include "ctkd/diffcore/tape.hpp"
#include "ctkd/rnnt/lattice.hpp"

namespace ctkd::train {

/// log_probs: [T*(U+1) x (V+1)].
ad::Tensor rnnt_loss_node(ad::Tape& tape, const ad::Tensor& log_probs, std::size_t frames, std::span<const Token> labels,
                          std::size_t vocab);

/// KD loss against a constant teacher lattice of the same geometry.
ad::Tensor kd_loss_node(ad::Tape& tape, const ad::Tensor& student_log_probs, const rnnt::Lattice& teacher);

}  // namespace ctkd::train
