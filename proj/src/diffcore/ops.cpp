// SPDX-License-Identifier: Apache-2.0
#include "ctkd/diffcore/ops.hpp"

#include <array>

namespace ctkd::ad {
namespace {

Tensor unary(Tape& tape, OpKind kind, const Tensor& x, OpAttrs attrs = {}) {
  std::array<Tensor, 1> in{x};
  return tape.apply(kind, in, attrs);
}

Tensor binary(Tape& tape, OpKind kind, const Tensor& a, const Tensor& b, OpAttrs attrs = {}) {
  std::array<Tensor, 2> in{a, b};
  return tape.apply(kind, in, attrs);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b, bool transpose_b) {
  OpAttrs attrs;
  attrs.flag = transpose_b;
  return binary(tape, OpKind::matmul, a, b, attrs);
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, OpKind::add, a, b); }
Tensor multiply(Tape& tape, const Tensor& a, const Tensor& b) { return binary(tape, OpKind::multiply, a, b); }

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return tape.apply(OpKind::concat, parts, attrs);
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  OpAttrs attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  return unary(tape, OpKind::slice, x, attrs);
}

Tensor embedding_lookup(Tape& tape, const Tensor& table, std::vector<std::size_t> rows) {
  OpAttrs attrs;
  attrs.indices = std::move(rows);
  return unary(tape, OpKind::embedding_lookup, table, std::move(attrs));
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (!bias.defined()) return binary(tape, OpKind::linear, x, w);
  std::array<Tensor, 3> in{x, w, bias};
  return tape.apply(OpKind::linear, in);
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  OpAttrs attrs;
  attrs.scalar = eps;
  std::array<Tensor, 3> in{x, gamma, beta};
  return tape.apply(OpKind::layer_norm, in, attrs);
}

Tensor softmax(Tape& tape, const Tensor& x, bool causal) {
  OpAttrs attrs;
  attrs.flag = causal;
  return unary(tape, OpKind::softmax, x, attrs);
}

Tensor log_softmax(Tape& tape, const Tensor& x) { return unary(tape, OpKind::log_softmax, x); }
Tensor sigmoid(Tape& tape, const Tensor& x) { return unary(tape, OpKind::sigmoid, x); }
Tensor swish(Tape& tape, const Tensor& x) { return unary(tape, OpKind::swish, x); }
Tensor glu(Tape& tape, const Tensor& x) { return unary(tape, OpKind::glu, x); }
Tensor relu(Tape& tape, const Tensor& x) { return unary(tape, OpKind::relu, x); }
Tensor tanh(Tape& tape, const Tensor& x) { return unary(tape, OpKind::tanh, x); }

Tensor depthwise_conv1d_causal(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  std::array<Tensor, 3> in{x, w, bias};
  return tape.apply(OpKind::depthwise_conv1d_causal, in);
}

Tensor max_pool1d_time(Tape& tape, const Tensor& x) { return unary(tape, OpKind::max_pool1d_time, x); }

Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training) {
  OpAttrs attrs;
  attrs.scalar = rate;
  attrs.flag = training;
  return unary(tape, OpKind::dropout, x, attrs);
}

Tensor sum(Tape& tape, const Tensor& x) { return unary(tape, OpKind::sum, x); }
Tensor mean(Tape& tape, const Tensor& x) { return unary(tape, OpKind::mean, x); }
Tensor transpose(Tape& tape, const Tensor& x) { return unary(tape, OpKind::transpose, x); }

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return unary(tape, OpKind::scale, x, attrs);
}

}  // namespace ctkd::ad
