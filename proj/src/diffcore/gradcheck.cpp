// SPDX-License-Identifier: Apache-2.0
#include "ctkd/diffcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ctkd/common/errors.hpp"

namespace ctkd::ad {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::max_relative_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_relative_error);
  return m;
}

GradCheckReport check_gradients(const TensorProgram& program,
                                std::vector<std::pair<std::string, Tensor>> params,
                                const GradCheckOptions& options) {
  if (!(options.epsilon > 0)) throw ContractError("check_gradients: epsilon must be positive");

  auto evaluate = [&]() {
    Tape tape(options.seed);
    Tensor out = program(tape);
    if (!options.seed && tape.used_randomness()) {
      throw ContractError("check_gradients: program is stochastic but no seed was given");
    }
    return out.item();
  };

  Tape tape(options.seed);
  Tensor loss = program(tape);
  if (!options.seed && tape.used_randomness()) {
    throw ContractError("check_gradients: program is stochastic but no seed was given");
  }
  Gradients grads = tape.backpropagate(loss);

  GradCheckReport report;
  for (auto& [name, param] : params) {
    GradCheckEntry entry;
    entry.name = name;
    Tensor analytic = grads.of(param);
    auto values = param.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double up = evaluate();
      values[i] = saved - options.epsilon;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double a = analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      entry.max_absolute_error = std::max(entry.max_absolute_error, abs_err);
      entry.max_relative_error = std::max(entry.max_relative_error, rel);
    }
    entry.passed = entry.max_relative_error <= options.tolerance;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace ctkd::ad
