// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "ctkd/common/keyvalue.hpp"

namespace ctkd::train {

struct ScheduleConfig {
  double base_lr = 1e-4;
  double warmup = 10000;
  double decay_steps = 40000;

  void validate() const;
  static ScheduleConfig from_keyvalues(const KeyValues& kv, const std::string& prefix, const ScheduleConfig& base);
};

/// step < warmup:  base_lr * (step/warmup)^3 + 1e-7
/// otherwise:      min(base_lr, 5 * base_lr * 0.9^((step - warmup) / decay_steps))
double learning_rate(std::uint64_t step, const ScheduleConfig& config);

}  // namespace ctkd::train
