// SPDX-License-Identifier: Apache-2.0
#include "ctkd/train/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "ctkd/common/errors.hpp"

namespace ctkd::train {

void ScheduleConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("schedule.base_lr must be positive", "schedule.base_lr");
  if (!(warmup > 0.0)) throw ConfigError("schedule.warmup must be positive", "schedule.warmup");
  if (!(decay_steps > 0.0)) throw ConfigError("schedule.decay_steps must be positive", "schedule.decay_steps");
}

ScheduleConfig ScheduleConfig::from_keyvalues(const KeyValues& kv, const std::string& p, const ScheduleConfig& base) {
  ScheduleConfig c = base;
  c.base_lr = kv.get_double(p + "base_lr", c.base_lr);
  c.warmup = kv.get_double(p + "warmup", c.warmup);
  c.decay_steps = kv.get_double(p + "decay_steps", c.decay_steps);
  c.validate();
  return c;
}

double learning_rate(std::uint64_t step, const ScheduleConfig& c) {
  const double s = static_cast<double>(step);
  if (s < c.warmup) {
    const double lambda = s / c.warmup;
    return c.base_lr * lambda * lambda * lambda + 1e-7;
  }
  const double gamma = (s - c.warmup) / c.decay_steps;
  return std::min(c.base_lr, 5.0 * c.base_lr * std::pow(0.9, gamma));
}

}  // namespace ctkd::train
