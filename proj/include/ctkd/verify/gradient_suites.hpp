// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks over every differentiable piece of the library:
// each tape op on three input shapes, the transducer loss, the KD loss and a
// complete tiny model.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctkd/diffcore/gradcheck.hpp"

namespace ctkd::verify {

struct SuiteCase {
  std::string suite;  // diffcore, rnnt, distill, model
  std::string name;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct SuiteOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
  /// Restrict to one suite; empty runs all.
  std::string only;
};

std::vector<SuiteCase> run_gradient_suites(const SuiteOptions& options = {}, std::ostream* log = nullptr);

}  // namespace ctkd::verify
