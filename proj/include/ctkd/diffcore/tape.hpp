// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctkd/diffcore/tensor.hpp"

namespace ctkd::ad {

enum class OpKind {
  matmul,
  add,
  multiply,
  concat,
  slice,
  embedding_lookup,
  linear,
  layer_norm,
  softmax,
  log_softmax,
  sigmoid,
  swish,
  glu,
  relu,
  depthwise_conv1d_causal,
  max_pool1d_time,
  dropout,
  sum,
  mean,
  tanh,
  transpose,
  scale,
  custom,
};

std::string_view op_name(OpKind kind);

/// Op-specific scalars. Unused fields are ignored.
///
///   matmul      flag = rhs is transposed
///   concat      axis
///   slice       axis, [begin, end)
///   embedding   indices = rows to gather
///   layer_norm  scalar = epsilon
///   softmax     flag = causal (row i normalises over columns <= i)
///   dropout     scalar = rate, flag = training
///   scale       scalar = factor
struct OpAttrs {
  double scalar = 0.0;
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  bool flag = false;
  std::vector<std::size_t> indices;
};

/// Gradients of one backward pass, keyed by tensor storage.
class Gradients {
 public:
  /// Gradient of `t`; all zeros when `t` was not reachable from the loss.
  Tensor of(const Tensor& t) const;
  bool reached(const Tensor& t) const { return grads_.count(t.id()) != 0; }
  /// Adds this pass's gradient into t's own grad slot.
  void accumulate_into(Tensor& t) const;

 private:
  friend class Tape;
  std::unordered_map<const void*, std::vector<double>> grads_;
};

/// Ordered record of executed ops.
///
/// Ops are appended in execution order, so the record list is already
/// topologically sorted and backpropagation walks it in reverse. A tape owns
/// the random stream used by stochastic ops; two tapes with the same seed
/// executing the same program produce bit-identical values. A tape and the
/// intermediate tensors it creates belong to a single thread.
class Tape {
 public:
  using CustomBackward =
      std::function<void(std::span<const double> grad_out, std::span<std::vector<double>*> input_grads)>;

  /// `recording == false` gives an inference tape: values only, no graph.
  explicit Tape(std::optional<std::uint64_t> seed = std::nullopt, bool recording = true);

  Tensor apply(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

  /// Records an op whose value was computed outside the engine. `backward`
  /// receives dL/d(output) and must add dL/d(input_i) into input_grads[i]
  /// (null for inputs that do not need a gradient).
  Tensor custom(std::string name, std::span<const Tensor> inputs, Tensor output, CustomBackward backward);

  /// Reverse sweep from a single-element loss.
  Gradients backpropagate(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  bool recording() const { return recording_; }
  std::optional<std::uint64_t> seed() const { return seed_; }
  bool used_randomness() const { return used_randomness_; }
  std::vector<OpKind> op_kinds() const;

 private:
  struct Record {
    OpKind kind;
    OpAttrs attrs;
    std::vector<Tensor> inputs;
    std::vector<long> producers;  // record index per input, -1 for leaves
    Tensor output;
    std::vector<double> aux;  // saved forward state
    std::string name;
    CustomBackward custom_backward;
  };

  Tensor push(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs, Tensor output,
              std::vector<double> aux);
  double next_uniform();
  void backward_record(const Record& rec, const std::vector<double>& grad_out,
                       std::span<std::vector<double>*> input_grads) const;

  std::vector<Record> records_;
  std::unordered_map<const void*, long> producer_of_;
  std::optional<std::uint64_t> seed_;
  bool recording_;
  bool used_randomness_ = false;
  std::mt19937_64 rng_;
};

}  // namespace ctkd::ad
