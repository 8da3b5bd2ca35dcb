// SPDX-License-Identifier: Apache-2.0
#include "ctkd/frontend/spec_augment.hpp"

#include <algorithm>

namespace ctkd::frontend {
namespace {

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

FeatureMatrix spec_augment(const FeatureMatrix& features, const AugmentPolicy& policy, std::mt19937_64& rng,
                           std::vector<MaskBand>* applied) {
  FeatureMatrix out = features;
  if (features.values.empty()) return out;
  double mean = 0.0;
  for (double v : features.values) mean += v;
  mean /= static_cast<double>(features.values.size());

  auto mask = [&](bool time, std::size_t count, std::size_t width_max) {
    const std::size_t extent = time ? features.frames : features.dims;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t width = draw(rng, 0, std::min(width_max, extent));
      const std::size_t begin = draw(rng, 0, extent - width);
      for (std::size_t j = begin; j < begin + width; ++j) {
        if (time) {
          for (std::size_t d = 0; d < features.dims; ++d) out.at(j, d) = mean;
        } else {
          for (std::size_t f = 0; f < features.frames; ++f) out.at(f, j) = mean;
        }
      }
      if (applied) applied->push_back({time, begin, width});
    }
  };
  mask(false, policy.freq_masks, policy.freq_mask_width_max);
  mask(true, policy.time_masks, policy.time_mask_width_max);
  return out;
}

}  // namespace ctkd::frontend
