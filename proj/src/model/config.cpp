// SPDX-License-Identifier: Apache-2.0
#include "ctkd/model/config.hpp"

#include "ctkd/common/errors.hpp"

namespace ctkd::model {
namespace {

std::size_t get_size(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw ConfigError("key '" + key + "' must be non-negative", key);
  return static_cast<std::size_t>(v);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg, const std::string& key) { throw ConfigError(msg, key); };
  if (feature_dim == 0) fail("model.feature_dim must be positive", "model.feature_dim");
  if (vocab_size < 1) fail("model.vocab_size must be at least 1", "model.vocab_size");
  if (blank_id != kBlank) fail("model.blank_id must be 0", "model.blank_id");
  if (joint_dim == 0) fail("model.joint_dim must be positive", "model.joint_dim");
  const auto& e = encoder;
  if (e.num_layers == 0) fail("model.encoder.num_layers must be positive", "model.encoder.num_layers");
  if (e.model_dim == 0) fail("model.encoder.model_dim must be positive", "model.encoder.model_dim");
  if (e.attention_heads == 0 || e.model_dim % e.attention_heads != 0) {
    fail("model.encoder.model_dim must be divisible by attention_heads", "model.encoder.attention_heads");
  }
  if (e.ff_expansion == 0) fail("model.encoder.ff_expansion must be positive", "model.encoder.ff_expansion");
  if (e.conv_kernel == 0 || e.conv_kernel % 2 == 0) {
    fail("model.encoder.conv_kernel must be odd", "model.encoder.conv_kernel");
  }
  if (e.pooling_layers > 16) fail("model.encoder.pooling_layers is unreasonably large", "model.encoder.pooling_layers");
  if (e.max_positions == 0) fail("model.encoder.max_positions must be positive", "model.encoder.max_positions");
  if (!(e.dropout >= 0.0 && e.dropout < 1.0)) fail("model.encoder.dropout must lie in [0,1)", "model.encoder.dropout");
  if (decoder.num_layers < 1) fail("model.decoder.num_layers must be at least 1", "model.decoder.num_layers");
  if (decoder.hidden_dim == 0) fail("model.decoder.hidden_dim must be positive", "model.decoder.hidden_dim");
  if (!(decoder.dropout >= 0.0 && decoder.dropout < 1.0)) {
    fail("model.decoder.dropout must lie in [0,1)", "model.decoder.dropout");
  }
}

ModelConfig ModelConfig::from_keyvalues(const KeyValues& kv, const std::string& p, const ModelConfig& base) {
  ModelConfig c = base;
  c.feature_dim = get_size(kv, p + "feature_dim", c.feature_dim);
  c.joint_dim = get_size(kv, p + "joint_dim", c.joint_dim);
  c.vocab_size = get_size(kv, p + "vocab_size", c.vocab_size);
  c.blank_id = static_cast<Token>(kv.get_int(p + "blank_id", c.blank_id));
  c.encoder.num_layers = get_size(kv, p + "encoder.num_layers", c.encoder.num_layers);
  c.encoder.model_dim = get_size(kv, p + "encoder.model_dim", c.encoder.model_dim);
  c.encoder.attention_heads = get_size(kv, p + "encoder.attention_heads", c.encoder.attention_heads);
  c.encoder.ff_expansion = get_size(kv, p + "encoder.ff_expansion", c.encoder.ff_expansion);
  c.encoder.conv_kernel = get_size(kv, p + "encoder.conv_kernel", c.encoder.conv_kernel);
  c.encoder.pooling_layers = get_size(kv, p + "encoder.pooling_layers", c.encoder.pooling_layers);
  c.encoder.max_positions = get_size(kv, p + "encoder.max_positions", c.encoder.max_positions);
  c.encoder.dropout = kv.get_double(p + "encoder.dropout", c.encoder.dropout);
  c.decoder.num_layers = get_size(kv, p + "decoder.num_layers", c.decoder.num_layers);
  c.decoder.hidden_dim = get_size(kv, p + "decoder.hidden_dim", c.decoder.hidden_dim);
  c.decoder.dropout = kv.get_double(p + "decoder.dropout", c.decoder.dropout);
  c.validate();
  return c;
}

void ModelConfig::to_keyvalues(KeyValues& kv, const std::string& p) const {
  kv.set(p + "feature_dim", std::to_string(feature_dim));
  kv.set(p + "joint_dim", std::to_string(joint_dim));
  kv.set(p + "vocab_size", std::to_string(vocab_size));
  kv.set(p + "blank_id", std::to_string(blank_id));
  kv.set(p + "encoder.num_layers", std::to_string(encoder.num_layers));
  kv.set(p + "encoder.model_dim", std::to_string(encoder.model_dim));
  kv.set(p + "encoder.attention_heads", std::to_string(encoder.attention_heads));
  kv.set(p + "encoder.ff_expansion", std::to_string(encoder.ff_expansion));
  kv.set(p + "encoder.conv_kernel", std::to_string(encoder.conv_kernel));
  kv.set(p + "encoder.pooling_layers", std::to_string(encoder.pooling_layers));
  kv.set(p + "encoder.max_positions", std::to_string(encoder.max_positions));
  kv.set(p + "encoder.dropout", format_double(encoder.dropout));
  kv.set(p + "decoder.num_layers", std::to_string(decoder.num_layers));
  kv.set(p + "decoder.hidden_dim", std::to_string(decoder.hidden_dim));
  kv.set(p + "decoder.dropout", format_double(decoder.dropout));
}

ModelConfig ModelConfig::from_keyvalues(const KeyValues& kv, const std::string& prefix) {
  return from_keyvalues(kv, prefix, ModelConfig{});
}

std::string ModelConfig::canonical_text() const {
  KeyValues kv;
  to_keyvalues(kv);
  return kv.to_text();
}

ParameterCount count_parameters(const ModelConfig& c) {
  c.validate();
  using U = std::uint64_t;
  const U d = c.encoder.model_dim, e = c.encoder.ff_expansion, k = c.encoder.conv_kernel;
  const U h = c.decoder.hidden_dim, j = c.joint_dim;
  const U norm = 2 * d;
  const U feed_forward = norm + d * e * d + e * d + e * d * d + d;
  const U conv = norm + d * 2 * d + 2 * d + k * d + d + norm + d * d + d;
  const U attention = norm + 4 * (d * d + d);
  const U block = 2 * feed_forward + conv + attention + norm;

  ParameterCount out;
  out.input_projection = c.feature_dim * d + d;
  out.positions = c.encoder.max_positions * d;
  out.encoder_blocks = c.encoder.num_layers * block;
  for (std::size_t l = 0; l < c.decoder.num_layers; ++l) {
    const U in = l == 0 ? j : h;
    out.prediction_network += 4 * h * (in + h + 1);
  }
  out.joint_network = d * j + j + h * j;
  out.embedding = (c.vocab_size + 1) * j;
  return out;
}

}  // namespace ctkd::model
