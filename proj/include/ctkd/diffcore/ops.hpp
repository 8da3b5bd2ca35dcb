// SPDX-License-Identifier: Apache-2.0
//
// Convenience wrappers around Tape::apply. Matrices are rank-2 row-major;
// vectors (biases, norms) are rank-1.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ctkd/diffcore/tape.hpp"

namespace ctkd::ad {

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b, bool transpose_b = false);
/// Elementwise; `b` may also be a row vector (broadcast over rows) or a scalar.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor multiply(Tape& tape, const Tensor& a, const Tensor& b);
Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);
Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor embedding_lookup(Tape& tape, const Tensor& table, std::vector<std::size_t> rows);
/// x[m x in] * w[in x out] (+ bias[out]).
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias = {});
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor softmax(Tape& tape, const Tensor& x, bool causal = false);
Tensor log_softmax(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor swish(Tape& tape, const Tensor& x);
Tensor glu(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
/// y[t,c] = bias[c] + sum_k w[k,c] * x[t-K+1+k, c], zero left padding.
Tensor depthwise_conv1d_causal(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);
/// Window = stride = 2 over rows; a trailing odd row is dropped.
Tensor max_pool1d_time(Tape& tape, const Tensor& x);
/// Inverted dropout; identity when !training or rate == 0.
Tensor dropout(Tape& tape, const Tensor& x, double rate, bool training);
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);
Tensor transpose(Tape& tape, const Tensor& x);
Tensor scale(Tape& tape, const Tensor& x, double factor);

}  // namespace ctkd::ad
