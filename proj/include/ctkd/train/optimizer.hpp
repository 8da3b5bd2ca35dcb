// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ctkd/common/keyvalue.hpp"
#include "ctkd/model/transducer.hpp"

namespace ctkd::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  double clip_norm = 5.0;  // global L2 norm; <= 0 disables clipping

  void validate() const;
  static AdamConfig from_keyvalues(const KeyValues& kv, const std::string& prefix, const AdamConfig& base);
};

/// Optimizer state; moments are parallel to the parameter list.
struct TrainState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

struct StepInfo {
  double grad_norm = 0.0;    // before clipping
  double clip_scale = 1.0;   // factor applied to the gradient
};

/// One Adam update with bias correction, after clipping the global gradient
/// norm. `grads[i]` belongs to `params[i]`. A non-finite gradient throws
/// NumericError and leaves parameters and state untouched.
StepInfo optimizer_step(const model::NamedTensors& params, const std::vector<std::vector<double>>& grads,
                        TrainState& state, double lr, const AdamConfig& config = {});

}  // namespace ctkd::train
