// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ctkd/common/types.hpp"

namespace ctkd::frontend {

/// frames x dims matrix, row-major.
struct FeatureMatrix {
  std::size_t frames = 0;
  std::size_t dims = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t f, std::size_t d) : frames(f), dims(d), values(f * d, 0.0) {}
  FeatureMatrix(std::size_t f, std::size_t d, std::vector<double> v);

  double& at(std::size_t f, std::size_t d) { return values[f * dims + d]; }
  double at(std::size_t f, std::size_t d) const { return values[f * dims + d]; }
  bool all_finite() const;
};

struct Utterance {
  std::string id;
  FeatureMatrix features;
  TokenSeq labels;
};

using Dataset = std::vector<Utterance>;

}  // namespace ctkd::frontend
