// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace ctkd {

/// Output symbol index. 0 is the transducer blank, 1..V are vocabulary tokens.
using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

inline constexpr Token kBlank = 0;

}  // namespace ctkd
