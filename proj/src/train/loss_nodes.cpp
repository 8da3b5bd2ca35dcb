// SPDX-License-Identifier: Apache-2.0
#include "ctkd/train/loss_nodes.hpp"

#include <array>
#include <cmath>
#include <memory>

#include "ctkd/common/errors.hpp"
#include "ctkd/distill/kd_loss.hpp"
#include "ctkd/rnnt/rnnt_loss.hpp"

namespace ctkd::train {
namespace {

ad::Tensor wrap(ad::Tape& tape, const char* name, const ad::Tensor& input, double value, std::vector<double> grad) {
  if (!std::isfinite(value)) throw NumericError(std::string(name) + " is not finite");
  auto g = std::make_shared<std::vector<double>>(std::move(grad));
  std::array<ad::Tensor, 1> inputs{input};
  return tape.custom(name, inputs, ad::Tensor::scalar(value),
                     [g](std::span<const double> grad_out, std::span<std::vector<double>*> input_grads) {
                       if (!input_grads[0]) return;
                       auto& dst = *input_grads[0];
                       for (std::size_t i = 0; i < g->size(); ++i) dst[i] += grad_out[0] * (*g)[i];
                     });
}

rnnt::Lattice as_lattice(const ad::Tensor& lp, std::size_t frames, std::size_t labels, std::size_t vocab) {
  if (lp.rank() != 2 || lp.rows() != frames * (labels + 1) || lp.cols() != vocab + 1) {
    throw ShapeError("lattice tensor " + ad::shape_string(lp.shape()) + " does not match T=" + std::to_string(frames) +
                     ", U=" + std::to_string(labels) + ", V=" + std::to_string(vocab));
  }
  return rnnt::Lattice(frames, labels, vocab, std::vector<double>(lp.data().begin(), lp.data().end()));
}

}  // namespace

ad::Tensor rnnt_loss_node(ad::Tape& tape, const ad::Tensor& log_probs, std::size_t frames,
                          std::span<const Token> labels, std::size_t vocab) {
  auto r = rnnt::rnnt_loss(as_lattice(log_probs, frames, labels.size(), vocab), labels);
  return wrap(tape, "rnnt_loss", log_probs, r.loss, std::move(r.grad_log_probs));
}

ad::Tensor kd_loss_node(ad::Tape& tape, const ad::Tensor& student_log_probs, const rnnt::Lattice& teacher) {
  auto r = distill::kd_loss(teacher, as_lattice(student_log_probs, teacher.frames, teacher.labels, teacher.vocab));
  return wrap(tape, "kd_loss", student_log_probs, r.loss, std::move(r.grad_student_log_probs));
}

}  // namespace ctkd::train
