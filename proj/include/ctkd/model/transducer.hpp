// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctkd/common/types.hpp"
#include "ctkd/diffcore/tape.hpp"
#include "ctkd/frontend/features.hpp"
#include "ctkd/model/config.hpp"
#include "ctkd/rnnt/lattice.hpp"

namespace ctkd::model {

using NamedTensors = std::vector<std::pair<std::string, ad::Tensor>>;

struct LayerNormParams {
  ad::Tensor gain, bias;
};

struct FeedForwardParams {
  LayerNormParams norm;
  ad::Tensor w1, b1, w2, b2;  // w2/b2: output projection
};

/// pointwise -> GLU -> causal depthwise -> layer norm -> swish -> pointwise
struct ConvModuleParams {
  LayerNormParams norm;
  ad::Tensor pointwise1_w, pointwise1_b;
  ad::Tensor depthwise_w, depthwise_b;
  LayerNormParams mid_norm;
  ad::Tensor pointwise2_w, pointwise2_b;  // output projection
};

struct AttentionParams {
  LayerNormParams norm;
  ad::Tensor wq, bq, wk, bk, wv, bv;
  ad::Tensor wo, bo;  // output projection
  std::size_t heads = 1;
};

struct ConformerBlockParams {
  FeedForwardParams ff1;
  ConvModuleParams conv;
  AttentionParams attention;
  FeedForwardParams ff2;
  LayerNormParams final_norm;
};

/// One conformer block, residual at every stage:
///   x1 = x  + FF1(x)
///   x2 = x1 + Conv(x1)
///   x3 = x2 + MHSA(x2)
///   y  = LayerNorm(x3 + FF2(x3))
/// Each module starts with its own layer norm. With `causal`, attention only
/// looks at past frames and the convolution is left-padded, so row t of the
/// output depends on input rows <= t only.
ad::Tensor conformer_block_forward(ad::Tape& tape, const ad::Tensor& x, const ConformerBlockParams& params,
                                   bool causal = true);

struct LstmLayerParams {
  ad::Tensor w_ih, w_hh, bias;  // gate order i, f, g, o
};

/// Recurrent state of the prediction network, one 1 x hidden row per layer.
struct PredictorState {
  std::vector<ad::Tensor> h, c;
};

/// Streaming conformer transducer with the joint output matrix tied to the
/// prediction-network embedding table.
class ConformerTransducer {
 public:
  /// Fresh model with weights drawn from `init_seed`.
  ConformerTransducer(const ModelConfig& config, std::uint64_t init_seed);
  /// Model built from existing values; names and shapes must match the config.
  static ConformerTransducer from_parameters(const ModelConfig& config, const NamedTensors& values);

  ConformerTransducer(const ConformerTransducer&) = delete;
  ConformerTransducer& operator=(const ConformerTransducer&) = delete;
  ConformerTransducer(ConformerTransducer&&) = default;
  ConformerTransducer& operator=(ConformerTransducer&&) = default;

  const ModelConfig& config() const { return config_; }
  /// Every trainable tensor once, in a fixed order.
  const NamedTensors& parameters() const { return params_; }
  const ad::Tensor& parameter(const std::string& name) const;
  std::uint64_t instantiated_parameter_count() const;
  /// Deep copy of all values.
  NamedTensors snapshot() const;

  const ConformerBlockParams& block(std::size_t i) const { return blocks_[i]; }
  const ad::Tensor& embedding() const { return embedding_; }

  /// Encoder frames produced for `input_frames` feature frames.
  std::size_t encoded_frames(std::size_t input_frames) const;

  /// features -> input projection + positions -> blocks (pooling after the
  /// first blocks) -> T' x model_dim. Dropout follows every block.
  ad::Tensor encode(ad::Tape& tape, const frontend::FeatureMatrix& features, bool training) const;

  PredictorState initial_state() const;
  /// Feeds `previous` (kBlank for the start symbol) and returns the new
  /// 1 x hidden output.
  ad::Tensor predict_step(ad::Tape& tape, PredictorState& state, Token previous, bool training) const;
  /// (U+1) x hidden prediction states; row u has seen labels[0..u).
  ad::Tensor predict(ad::Tape& tape, std::span<const Token> labels, bool training) const;

  /// Logits for every (t,u) pair: row t*P+u of a (T*P) x (V+1) matrix.
  ad::Tensor joint_logits(ad::Tape& tape, const ad::Tensor& encoder_states, const ad::Tensor& prediction_states) const;
  /// log_softmax(joint_logits / temperature).
  ad::Tensor joint(ad::Tape& tape, const ad::Tensor& encoder_states, const ad::Tensor& prediction_states,
                   double temperature = 1.0) const;

  /// Full lattice log-probabilities for one utterance.
  ad::Tensor lattice_log_probs(ad::Tape& tape, const frontend::FeatureMatrix& features, std::span<const Token> labels,
                               double temperature, bool training) const;

 private:
  explicit ConformerTransducer(const ModelConfig& config);
  ad::Tensor& add_parameter(const std::string& name, ad::Shape shape);
  void initialize(std::uint64_t seed);

  ModelConfig config_;
  NamedTensors params_;
  std::unordered_map<std::string, std::size_t> index_;

  ad::Tensor input_w_, input_b_, positions_;
  std::vector<ConformerBlockParams> blocks_;
  std::vector<LstmLayerParams> lstm_;
  ad::Tensor joint_enc_w_, joint_enc_b_, joint_pred_w_;
  ad::Tensor embedding_;  // (V+1) x joint_dim; rows 1..V embed labels, all rows score outputs
};

/// Copies a [T*(U+1) x (V+1)] log-probability tensor into a Lattice.
rnnt::Lattice to_lattice(const ad::Tensor& log_probs, std::size_t frames, std::size_t labels, std::size_t vocab);

}  // namespace ctkd::model
