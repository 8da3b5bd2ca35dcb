// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace ctkd::pipeline {

struct CompressionPercent {
  double exact = 0.0;  // 100 * (1 - student / teacher)
  int rounded = 0;     // round-half-up of exact
};

/// Throws ContractError for teacher_params == 0 and ConfigError when the
/// student is larger than the teacher.
CompressionPercent compression_percent(std::uint64_t teacher_params, std::uint64_t student_params);

/// Same arithmetic on real-valued counts (e.g. millions read off a table).
CompressionPercent compression_percent(double teacher_params, double student_params);

int round_half_up(double value);

}  // namespace ctkd::pipeline
