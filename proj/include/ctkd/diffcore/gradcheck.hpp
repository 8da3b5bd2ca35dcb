// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctkd/diffcore/tape.hpp"

namespace ctkd::ad {

/// A scalar-valued program over parameters captured by the closure.
using TensorProgram = std::function<Tensor(Tape&)>;

struct GradCheckEntry {
  std::string name;
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed() const;
  double max_relative_error() const;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  /// The floor keeps components whose true value is ~0 from being judged on
  /// round-off alone.
  double floor = 1e-5;
  /// Required when the program uses dropout or any other stochastic op.
  std::optional<std::uint64_t> seed;
};

/// Compares reverse-mode gradients with central differences
/// (f(x+eps) - f(x-eps)) / 2eps, one parameter entry at a time. Parameters are
/// perturbed in place and restored afterwards.
GradCheckReport check_gradients(const TensorProgram& program,
                                std::vector<std::pair<std::string, Tensor>> params,
                                const GradCheckOptions& options = {});

}  // namespace ctkd::ad
