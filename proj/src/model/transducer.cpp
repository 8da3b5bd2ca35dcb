// SPDX-License-Identifier: Apache-2.0
#include "ctkd/model/transducer.hpp"

#include <array>
#include <cmath>
#include <random>

#include "ctkd/common/errors.hpp"
#include "ctkd/diffcore/ops.hpp"

namespace ctkd::model {
namespace {

using ad::Tape;
using ad::Tensor;

Tensor norm(Tape& tape, const Tensor& x, const LayerNormParams& p) { return ad::layer_norm(tape, x, p.gain, p.bias); }

Tensor feed_forward(Tape& tape, const Tensor& x, const FeedForwardParams& p) {
  Tensor h = ad::linear(tape, norm(tape, x, p.norm), p.w1, p.b1);
  return ad::linear(tape, ad::swish(tape, h), p.w2, p.b2);
}

Tensor conv_module(Tape& tape, const Tensor& x, const ConvModuleParams& p, bool causal) {
  if (!causal) throw ContractError("only the causal (left-padded) convolution is implemented");
  Tensor h = ad::linear(tape, norm(tape, x, p.norm), p.pointwise1_w, p.pointwise1_b);
  h = ad::glu(tape, h);
  h = ad::depthwise_conv1d_causal(tape, h, p.depthwise_w, p.depthwise_b);
  h = ad::swish(tape, norm(tape, h, p.mid_norm));
  return ad::linear(tape, h, p.pointwise2_w, p.pointwise2_b);
}

Tensor self_attention(Tape& tape, const Tensor& x, const AttentionParams& p, bool causal) {
  const Tensor n = norm(tape, x, p.norm);
  const Tensor q = ad::linear(tape, n, p.wq, p.bq);
  const Tensor k = ad::linear(tape, n, p.wk, p.bk);
  const Tensor v = ad::linear(tape, n, p.wv, p.bv);
  const std::size_t d = x.cols();
  const std::size_t dh = d / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(p.heads);
  for (std::size_t hd = 0; hd < p.heads; ++hd) {
    Tensor qh = p.heads == 1 ? q : ad::slice(tape, q, 1, hd * dh, (hd + 1) * dh);
    Tensor kh = p.heads == 1 ? k : ad::slice(tape, k, 1, hd * dh, (hd + 1) * dh);
    Tensor vh = p.heads == 1 ? v : ad::slice(tape, v, 1, hd * dh, (hd + 1) * dh);
    Tensor scores = ad::scale(tape, ad::matmul(tape, qh, kh, /*transpose_b=*/true), scale);
    Tensor weights = causal ? ad::softmax(tape, scores, true) : ad::softmax(tape, scores);
    heads.push_back(ad::matmul(tape, weights, vh));
  }
  Tensor merged = p.heads == 1 ? heads[0] : ad::concat(tape, heads, 1);
  return ad::linear(tape, merged, p.wo, p.bo);
}

}  // namespace

Tensor conformer_block_forward(Tape& tape, const Tensor& x, const ConformerBlockParams& p, bool causal) {
  if (x.rank() != 2 || x.cols() != p.ff1.norm.gain.numel()) {
    throw ShapeError("conformer block expects frames x " + std::to_string(p.ff1.norm.gain.numel()) + ", got " +
                     ad::shape_string(x.shape()));
  }
  Tensor x1 = ad::add(tape, x, feed_forward(tape, x, p.ff1));
  Tensor x2 = ad::add(tape, x1, conv_module(tape, x1, p.conv, causal));
  Tensor x3 = ad::add(tape, x2, self_attention(tape, x2, p.attention, causal));
  return norm(tape, ad::add(tape, x3, feed_forward(tape, x3, p.ff2)), p.final_norm);
}

// --- construction ----------------------------------------------------------

ConformerTransducer::ConformerTransducer(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.encoder.model_dim;
  const std::size_t ff = d * config_.encoder.ff_expansion;
  const std::size_t j = config_.joint_dim;
  const std::size_t h = config_.decoder.hidden_dim;

  input_w_ = add_parameter("encoder.input.weight", {config_.feature_dim, d});
  input_b_ = add_parameter("encoder.input.bias", {d});
  positions_ = add_parameter("encoder.positions", {config_.encoder.max_positions, d});

  auto layer_norm = [&](const std::string& name) {
    return LayerNormParams{add_parameter(name + ".gain", {d}), add_parameter(name + ".bias", {d})};
  };
  auto feed_forward_params = [&](const std::string& name) {
    FeedForwardParams p;
    p.norm = layer_norm(name + ".norm");
    p.w1 = add_parameter(name + ".w1", {d, ff});
    p.b1 = add_parameter(name + ".b1", {ff});
    p.w2 = add_parameter(name + ".w2", {ff, d});
    p.b2 = add_parameter(name + ".b2", {d});
    return p;
  };
  for (std::size_t i = 0; i < config_.encoder.num_layers; ++i) {
    const std::string b = "encoder.block" + std::to_string(i);
    ConformerBlockParams blk;
    blk.ff1 = feed_forward_params(b + ".ff1");
    blk.conv.norm = layer_norm(b + ".conv.norm");
    blk.conv.pointwise1_w = add_parameter(b + ".conv.pointwise1.weight", {d, 2 * d});
    blk.conv.pointwise1_b = add_parameter(b + ".conv.pointwise1.bias", {2 * d});
    blk.conv.depthwise_w = add_parameter(b + ".conv.depthwise.weight", {config_.encoder.conv_kernel, d});
    blk.conv.depthwise_b = add_parameter(b + ".conv.depthwise.bias", {d});
    blk.conv.mid_norm = layer_norm(b + ".conv.mid_norm");
    blk.conv.pointwise2_w = add_parameter(b + ".conv.pointwise2.weight", {d, d});
    blk.conv.pointwise2_b = add_parameter(b + ".conv.pointwise2.bias", {d});
    blk.attention.norm = layer_norm(b + ".mhsa.norm");
    blk.attention.wq = add_parameter(b + ".mhsa.wq", {d, d});
    blk.attention.bq = add_parameter(b + ".mhsa.bq", {d});
    blk.attention.wk = add_parameter(b + ".mhsa.wk", {d, d});
    blk.attention.bk = add_parameter(b + ".mhsa.bk", {d});
    blk.attention.wv = add_parameter(b + ".mhsa.wv", {d, d});
    blk.attention.bv = add_parameter(b + ".mhsa.bv", {d});
    blk.attention.wo = add_parameter(b + ".mhsa.wo", {d, d});
    blk.attention.bo = add_parameter(b + ".mhsa.bo", {d});
    blk.attention.heads = config_.encoder.attention_heads;
    blk.ff2 = feed_forward_params(b + ".ff2");
    blk.final_norm = layer_norm(b + ".final_norm");
    blocks_.push_back(std::move(blk));
  }
  for (std::size_t l = 0; l < config_.decoder.num_layers; ++l) {
    const std::string name = "decoder.lstm" + std::to_string(l);
    const std::size_t in = l == 0 ? j : h;
    lstm_.push_back({add_parameter(name + ".w_ih", {in, 4 * h}), add_parameter(name + ".w_hh", {h, 4 * h}),
                     add_parameter(name + ".bias", {4 * h})});
  }
  joint_enc_w_ = add_parameter("joint.encoder.weight", {d, j});
  joint_enc_b_ = add_parameter("joint.encoder.bias", {j});
  joint_pred_w_ = add_parameter("joint.prediction.weight", {h, j});
  embedding_ = add_parameter("embedding", {config_.vocab_size + 1, j});
}

ConformerTransducer::ConformerTransducer(const ModelConfig& config, std::uint64_t init_seed)
    : ConformerTransducer(config) {
  initialize(init_seed);
}

ConformerTransducer ConformerTransducer::from_parameters(const ModelConfig& config, const NamedTensors& values) {
  ConformerTransducer m(config);
  if (values.size() != m.params_.size()) {
    throw IntegrityError("expected " + std::to_string(m.params_.size()) + " parameter tensors, got " +
                         std::to_string(values.size()));
  }
  for (const auto& [name, value] : values) {
    auto it = m.index_.find(name);
    if (it == m.index_.end()) throw IntegrityError("unexpected parameter '" + name + "'");
    Tensor& dst = m.params_[it->second].second;
    if (dst.shape() != value.shape()) {
      throw IntegrityError("parameter '" + name + "' has shape " + ad::shape_string(value.shape()) + ", config implies " +
                           ad::shape_string(dst.shape()));
    }
    std::copy(value.data().begin(), value.data().end(), dst.mutable_data().begin());
  }
  return m;
}

Tensor& ConformerTransducer::add_parameter(const std::string& name, ad::Shape shape) {
  index_[name] = params_.size();
  params_.emplace_back(name, Tensor::zeros(std::move(shape), /*requires_grad=*/true));
  return params_.back().second;
}

void ConformerTransducer::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  const std::size_t h = config_.decoder.hidden_dim;
  for (auto& [name, t] : params_) {
    auto data = t.mutable_data();
    if (ends_with(name, ".gain")) {
      std::fill(data.begin(), data.end(), 1.0);
    } else if (name == "encoder.positions") {
      std::normal_distribution<double> normal(0.0, 0.02);
      for (double& v : data) v = normal(rng);
    } else if (t.rank() == 2) {
      // Xavier uniform; depthwise kernels use their tap count as fan-in.
      const double fan_in = static_cast<double>(t.shape()[0]);
      const double fan_out = name.find("depthwise") != std::string::npos ? 1.0 : static_cast<double>(t.shape()[1]);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> uni(-limit, limit);
      for (double& v : data) v = uni(rng);
    } else if (name.rfind("decoder.lstm", 0) == 0 && ends_with(name, ".bias")) {
      // forget-gate bias 1
      std::fill(data.begin(), data.end(), 0.0);
      std::fill(data.begin() + static_cast<std::ptrdiff_t>(h), data.begin() + static_cast<std::ptrdiff_t>(2 * h), 1.0);
    } else {
      std::fill(data.begin(), data.end(), 0.0);
    }
  }
}

const Tensor& ConformerTransducer::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter named '" + name + "'");
  return params_[it->second].second;
}

std::uint64_t ConformerTransducer::instantiated_parameter_count() const {
  std::uint64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

NamedTensors ConformerTransducer::snapshot() const {
  NamedTensors out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.emplace_back(name, t.clone());
  return out;
}

// --- encoder ---------------------------------------------------------------

std::size_t ConformerTransducer::encoded_frames(std::size_t input_frames) const {
  std::size_t n = input_frames;
  for (std::size_t i = 0; i < config_.encoder.pooling_layers; ++i) n /= 2;
  return n;
}

Tensor ConformerTransducer::encode(Tape& tape, const frontend::FeatureMatrix& features, bool training) const {
  const auto& enc = config_.encoder;
  if (features.dims != config_.feature_dim) {
    throw ShapeError("encoder expects " + std::to_string(config_.feature_dim) + "-dim features, got " +
                     std::to_string(features.dims));
  }
  if (features.frames < enc.pooling_factor()) {
    throw InputError("encoder needs at least " + std::to_string(enc.pooling_factor()) + " frames, got " +
                     std::to_string(features.frames));
  }
  if (features.frames > enc.max_positions) {
    throw InputError("utterance has " + std::to_string(features.frames) + " frames, position table holds " +
                     std::to_string(enc.max_positions));
  }
  Tensor x(ad::Shape{features.frames, features.dims}, features.values);
  // The input projection is the one layer without dropout after it.
  x = ad::linear(tape, x, input_w_, input_b_);
  x = ad::add(tape, x, ad::slice(tape, positions_, 0, 0, features.frames));
  std::size_t pools_left = enc.pooling_layers;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = conformer_block_forward(tape, x, blocks_[i], /*causal=*/true);
    const bool last = i + 1 == blocks_.size();
    while (pools_left > 0) {
      x = ad::max_pool1d_time(tape, x);
      --pools_left;
      if (!last) break;
    }
    x = ad::dropout(tape, x, enc.dropout, training);
  }
  return x;
}

// --- prediction network ----------------------------------------------------

PredictorState ConformerTransducer::initial_state() const {
  PredictorState s;
  const std::size_t h = config_.decoder.hidden_dim;
  for (std::size_t l = 0; l < lstm_.size(); ++l) {
    s.h.push_back(Tensor::zeros({1, h}));
    s.c.push_back(Tensor::zeros({1, h}));
  }
  return s;
}

namespace {

// One LSTM cell update given the precomputed input contribution (1 x 4h).
Tensor lstm_cell(Tape& tape, const Tensor& input_gates, const LstmLayerParams& p, Tensor& h, Tensor& c,
                 std::size_t hidden) {
  Tensor gates = ad::add(tape, input_gates, ad::matmul(tape, h, p.w_hh));
  Tensor i = ad::sigmoid(tape, ad::slice(tape, gates, 1, 0, hidden));
  Tensor f = ad::sigmoid(tape, ad::slice(tape, gates, 1, hidden, 2 * hidden));
  Tensor g = ad::tanh(tape, ad::slice(tape, gates, 1, 2 * hidden, 3 * hidden));
  Tensor o = ad::sigmoid(tape, ad::slice(tape, gates, 1, 3 * hidden, 4 * hidden));
  c = ad::add(tape, ad::multiply(tape, f, c), ad::multiply(tape, i, g));
  h = ad::multiply(tape, o, ad::tanh(tape, c));
  return h;
}

}  // namespace

Tensor ConformerTransducer::predict_step(Tape& tape, PredictorState& state, Token previous, bool training) const {
  const std::size_t h = config_.decoder.hidden_dim;
  if (previous < 0 || static_cast<std::size_t>(previous) > config_.vocab_size) {
    throw InputError("token " + std::to_string(previous) + " outside [0," + std::to_string(config_.vocab_size) + "]");
  }
  Tensor x = previous == kBlank ? Tensor::zeros({1, config_.joint_dim})
                                : ad::embedding_lookup(tape, embedding_, {static_cast<std::size_t>(previous)});
  for (std::size_t l = 0; l < lstm_.size(); ++l) {
    Tensor in = ad::linear(tape, x, lstm_[l].w_ih, lstm_[l].bias);
    x = lstm_cell(tape, in, lstm_[l], state.h[l], state.c[l], h);
    x = ad::dropout(tape, x, config_.decoder.dropout, training);
  }
  return x;
}

Tensor ConformerTransducer::predict(Tape& tape, std::span<const Token> labels, bool training) const {
  const std::size_t h = config_.decoder.hidden_dim;
  for (Token y : labels) {
    if (y < 1 || static_cast<std::size_t>(y) > config_.vocab_size) {
      throw InputError("label " + std::to_string(y) + " outside [1," + std::to_string(config_.vocab_size) + "]");
    }
  }
  // Row 0 is the start input (zeros); row u+1 embeds labels[u].
  Tensor x = Tensor::zeros({1, config_.joint_dim});
  if (!labels.empty()) {
    std::vector<std::size_t> rows(labels.begin(), labels.end());
    std::array<Tensor, 2> parts{x, ad::embedding_lookup(tape, embedding_, std::move(rows))};
    x = ad::concat(tape, parts, 0);
  }
  const std::size_t steps = labels.size() + 1;
  PredictorState state = initial_state();
  for (std::size_t l = 0; l < lstm_.size(); ++l) {
    Tensor in = ad::linear(tape, x, lstm_[l].w_ih, lstm_[l].bias);
    std::vector<Tensor> outputs;
    outputs.reserve(steps);
    for (std::size_t u = 0; u < steps; ++u) {
      Tensor row = steps == 1 ? in : ad::slice(tape, in, 0, u, u + 1);
      outputs.push_back(lstm_cell(tape, row, lstm_[l], state.h[l], state.c[l], h));
    }
    x = steps == 1 ? outputs[0] : ad::concat(tape, outputs, 0);
    x = ad::dropout(tape, x, config_.decoder.dropout, training);
  }
  return x;
}

// --- joint -----------------------------------------------------------------

Tensor ConformerTransducer::joint_logits(Tape& tape, const Tensor& enc, const Tensor& pred) const {
  const std::size_t T = enc.rows(), P = pred.rows();
  Tensor e = ad::linear(tape, enc, joint_enc_w_, joint_enc_b_);
  Tensor p = ad::matmul(tape, pred, joint_pred_w_);
  Tensor combined;
  if (T == 1 && P == 1) {
    combined = ad::add(tape, e, p);
  } else {
    std::vector<std::size_t> t_rows, u_rows;
    t_rows.reserve(T * P);
    u_rows.reserve(T * P);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t u = 0; u < P; ++u) {
        t_rows.push_back(t);
        u_rows.push_back(u);
      }
    }
    combined = ad::add(tape, ad::embedding_lookup(tape, e, std::move(t_rows)),
                       ad::embedding_lookup(tape, p, std::move(u_rows)));
  }
  return ad::matmul(tape, ad::tanh(tape, combined), embedding_, /*transpose_b=*/true);
}

Tensor ConformerTransducer::joint(Tape& tape, const Tensor& enc, const Tensor& pred, double temperature) const {
  if (!(temperature > 0.0)) throw ContractError("joint: temperature must be positive");
  Tensor logits = joint_logits(tape, enc, pred);
  if (temperature != 1.0) logits = ad::scale(tape, logits, 1.0 / temperature);
  return ad::log_softmax(tape, logits);
}

Tensor ConformerTransducer::lattice_log_probs(Tape& tape, const frontend::FeatureMatrix& features,
                                              std::span<const Token> labels, double temperature,
                                              bool training) const {
  Tensor enc = encode(tape, features, training);
  Tensor pred = predict(tape, labels, training);
  return joint(tape, enc, pred, temperature);
}

rnnt::Lattice to_lattice(const Tensor& log_probs, std::size_t frames, std::size_t labels, std::size_t vocab) {
  return rnnt::Lattice(frames, labels, vocab, std::vector<double>(log_probs.data().begin(), log_probs.data().end()));
}

}  // namespace ctkd::model
