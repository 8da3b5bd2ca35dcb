// SPDX-License-Identifier: Apache-2.0
#include "ctkd/pipeline/compression.hpp"

#include <cmath>
#include <string>

#include "ctkd/common/errors.hpp"

namespace ctkd::pipeline {

int round_half_up(double value) { return static_cast<int>(std::floor(value + 0.5)); }

CompressionPercent compression_percent(double teacher, double student) {
  if (!(teacher > 0.0)) throw ContractError("compression_percent: teacher parameter count must be positive");
  if (student < 0.0) throw ContractError("compression_percent: negative student parameter count");
  if (student > teacher) {
    throw ConfigError("student (" + std::to_string(student) + " parameters) is larger than its teacher (" +
                      std::to_string(teacher) + ")");
  }
  CompressionPercent c;
  c.exact = 100.0 * (1.0 - student / teacher);
  c.rounded = round_half_up(c.exact);
  return c;
}

CompressionPercent compression_percent(std::uint64_t teacher, std::uint64_t student) {
  return compression_percent(static_cast<double>(teacher), static_cast<double>(student));
}

}  // namespace ctkd::pipeline
