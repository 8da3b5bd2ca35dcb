// SPDX-License-Identifier: Apache-2.0
#include "ctkd/train/optimizer.hpp"

#include <cmath>

#include "ctkd/common/errors.hpp"

namespace ctkd::train {

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1 must be in [0,1)", "adam.beta1");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2 must be in [0,1)", "adam.beta2");
  if (!(epsilon > 0.0)) throw ConfigError("adam.epsilon must be positive", "adam.epsilon");
}

AdamConfig AdamConfig::from_keyvalues(const KeyValues& kv, const std::string& p, const AdamConfig& base) {
  AdamConfig c = base;
  c.beta1 = kv.get_double(p + "beta1", c.beta1);
  c.beta2 = kv.get_double(p + "beta2", c.beta2);
  c.epsilon = kv.get_double(p + "epsilon", c.epsilon);
  c.clip_norm = kv.get_double(p + "clip_norm", c.clip_norm);
  c.validate();
  return c;
}

StepInfo optimizer_step(const model::NamedTensors& params, const std::vector<std::vector<double>>& grads,
                        TrainState& state, double lr, const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    throw ShapeError("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].second.numel()) {
      throw ShapeError("optimizer: gradient of '" + params[i].first + "' has " + std::to_string(grads[i].size()) +
                       " values, parameter has " + std::to_string(params[i].second.numel()));
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) {
        throw NumericError("optimizer: non-finite gradient for '" + params[i].first + "' at step " +
                           std::to_string(state.step + 1));
      }
      sq += g * g;
    }
  }
  StepInfo info;
  info.grad_norm = std::sqrt(sq);
  if (cfg.clip_norm > 0.0 && info.grad_norm > cfg.clip_norm) info.clip_scale = cfg.clip_norm / info.grad_norm;

  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].second.numel(), 0.0);
      state.v[i].assign(params[i].second.numel(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = ad::Tensor(params[i].second).mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grads[i][k] * info.clip_scale;
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.epsilon);
    }
  }
  return info;
}

}  // namespace ctkd::train
