// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "ctkd/frontend/features.hpp"

namespace ctkd::frontend {

struct AugmentPolicy {
  std::size_t freq_mask_width_max = 8;
  std::size_t freq_masks = 2;
  std::size_t time_mask_width_max = 20;
  std::size_t time_masks = 2;

  static AugmentPolicy none() { return {0, 0, 0, 0}; }
};

struct MaskBand {
  bool time = false;  // true: rows [begin, begin+width); false: columns
  std::size_t begin = 0;
  std::size_t width = 0;
};

/// Frequency and time masking. Masked cells take the mean of the input
/// matrix; every other cell is copied unchanged. Band widths are drawn from
/// [0, width_max] and clamped to the matrix extent.
FeatureMatrix spec_augment(const FeatureMatrix& features, const AugmentPolicy& policy, std::mt19937_64& rng,
                           std::vector<MaskBand>* applied = nullptr);

}  // namespace ctkd::frontend
