// SPDX-License-Identifier: Apache-2.0
#include "ctkd/distill/kd_loss.hpp"

#include <cmath>

#include "ctkd/common/errors.hpp"

namespace ctkd::distill {

void DistillationConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("distill.alpha must lie in [0,1]", "distill.alpha");
  if (!(temperature > 0.0)) throw ConfigError("distill.temperature must be positive", "distill.temperature");
}

KdResult kd_loss(const rnnt::Lattice& teacher, const rnnt::Lattice& student) {
  if (teacher.frames != student.frames || teacher.labels != student.labels || teacher.vocab != student.vocab ||
      teacher.log_probs.size() != student.log_probs.size()) {
    throw ShapeError("kd_loss: teacher lattice " + std::to_string(teacher.frames) + "x" +
                     std::to_string(teacher.labels + 1) + "x" + std::to_string(teacher.vocab + 1) +
                     " differs from student lattice " + std::to_string(student.frames) + "x" +
                     std::to_string(student.labels + 1) + "x" + std::to_string(student.vocab + 1));
  }
  KdResult r;
  const std::size_t n = teacher.log_probs.size();
  r.grad_student_log_probs.resize(n);
  r.grad_student_logits.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lt = teacher.log_probs[i];
    const double ls = student.log_probs[i];
    const double pt = std::exp(lt);
    // 0 * ln 0 contributes nothing.
    if (pt > 0.0) total += pt * (lt - ls);
    r.grad_student_log_probs[i] = -pt;
    r.grad_student_logits[i] = std::exp(ls) - pt;
  }
  // KL is non-negative; tiny negative sums are round-off between equal lattices.
  r.loss = total < 0.0 ? 0.0 : total;
  if (!std::isfinite(r.loss)) throw NumericError("kd_loss: non-finite divergence");
  return r;
}

LossBreakdown total_loss(double transducer_loss, double kd, const DistillationConfig& config) {
  config.validate();
  LossBreakdown b;
  b.transducer_loss = transducer_loss;
  b.kd_loss = kd;
  b.total = (1.0 - config.alpha) * transducer_loss + config.alpha * kd;
  return b;
}

rnnt::Lattice tempered_lattice(std::size_t t, std::size_t u, std::size_t v, const std::vector<double>& logits,
                               double temperature) {
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  std::vector<double> scaled(logits);
  for (double& x : scaled) x /= temperature;
  return rnnt::Lattice::from_logits(t, u, v, scaled);
}

}  // namespace ctkd::distill
