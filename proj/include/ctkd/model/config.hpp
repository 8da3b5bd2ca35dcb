// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "ctkd/common/keyvalue.hpp"
#include "ctkd/common/types.hpp"

namespace ctkd::model {

struct EncoderConfig {
  std::size_t num_layers = 2;
  std::size_t model_dim = 64;
  std::size_t attention_heads = 4;
  std::size_t ff_expansion = 4;
  std::size_t conv_kernel = 15;
  /// Stride-2 time max-pools, one after each of the first blocks; any pools
  /// beyond num_layers run after the last block. Overall factor 2^pooling_layers.
  std::size_t pooling_layers = 3;
  /// Rows of the learned absolute position table (max input frames).
  std::size_t max_positions = 2048;
  double dropout = 0.1;

  std::size_t pooling_factor() const { return std::size_t{1} << pooling_layers; }
  bool operator==(const EncoderConfig&) const = default;
};

struct DecoderConfig {
  std::size_t num_layers = 1;
  std::size_t hidden_dim = 64;
  double dropout = 0.1;

  bool operator==(const DecoderConfig&) const = default;
};

struct ModelConfig {
  std::size_t feature_dim = 40;
  EncoderConfig encoder;
  DecoderConfig decoder;
  std::size_t joint_dim = 64;
  std::size_t vocab_size = 8;  // excluding blank
  Token blank_id = kBlank;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  /// Reads `<prefix>feature_dim`, `<prefix>encoder.num_layers`, ... Missing
  /// keys keep the values already in `base`.
  static ModelConfig from_keyvalues(const KeyValues& kv, const std::string& prefix, const ModelConfig& base);
  static ModelConfig from_keyvalues(const KeyValues& kv, const std::string& prefix = "model.");
  void to_keyvalues(KeyValues& kv, const std::string& prefix = "model.") const;
  /// Canonical text form: sorted `model.* = value` lines.
  std::string canonical_text() const;
};

/// Exact parameter counts implied by a configuration (tied tensors once).
struct ParameterCount {
  std::uint64_t input_projection = 0;
  std::uint64_t positions = 0;
  std::uint64_t encoder_blocks = 0;
  std::uint64_t prediction_network = 0;
  std::uint64_t joint_network = 0;
  std::uint64_t embedding = 0;  // shared by the prediction input and the joint output

  std::uint64_t encoder() const { return input_projection + positions + encoder_blocks; }
  std::uint64_t decoder() const { return prediction_network + joint_network + embedding; }
  std::uint64_t total() const { return encoder() + decoder(); }
};

ParameterCount count_parameters(const ModelConfig& config);

}  // namespace ctkd::model
