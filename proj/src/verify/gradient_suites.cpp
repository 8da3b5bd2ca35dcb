// SPDX-License-Identifier: Apache-2.0
#include "ctkd/verify/gradient_suites.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>

#include "ctkd/diffcore/ops.hpp"
#include "ctkd/distill/kd_loss.hpp"
#include "ctkd/model/transducer.hpp"
#include "ctkd/train/loss_nodes.hpp"

namespace ctkd::verify {
namespace {

using ad::Shape;
using ad::Tape;
using ad::Tensor;

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0, double min_abs = 0.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(ad::num_elements(shape));
  for (double& x : v) {
    do {
      x = n(rng);
    } while (std::abs(x) < min_abs);
  }
  return Tensor(std::move(shape), std::move(v), true);
}

// Weighted sum with fixed pseudo-random weights, so every output element
// carries a distinct gradient.
Tensor project(Tape& tape, const Tensor& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(out.numel());
  for (double& x : w) x = u(rng);
  return ad::sum(tape, ad::multiply(tape, out, Tensor(out.shape(), std::move(w))));
}

class Runner {
 public:
  Runner(const SuiteOptions& o, std::ostream* log) : opt_(o), log_(log) {}

  void check(const std::string& suite, const std::string& name, const ad::TensorProgram& program,
             const std::vector<std::pair<std::string, Tensor>>& params, bool stochastic = false) {
    if (!opt_.only.empty() && opt_.only != suite) return;
    ad::GradCheckOptions g;
    g.epsilon = opt_.epsilon;
    g.tolerance = opt_.tolerance;
    if (stochastic) g.seed = opt_.seed;
    const auto rep = ad::check_gradients(program, params, g);
    SuiteCase c{suite, name, rep.max_relative_error(), rep.passed()};
    if (log_) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3e", c.max_relative_error);
      *log_ << (c.passed ? "PASS " : "FAIL ") << suite << '/' << name << "  max_rel_err=" << buf << '\n';
    }
    cases_.push_back(c);
  }

  std::vector<SuiteCase> cases_;

 private:
  SuiteOptions opt_;
  std::ostream* log_;
};

void diffcore_suite(Runner& run, std::mt19937_64& rng) {
  const std::array<std::pair<std::size_t, std::size_t>, 3> shapes{{{1, 3}, {3, 4}, {5, 2}}};
  int k = 0;
  for (auto [r, c] : shapes) {
    const std::string tag = "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
    const std::uint64_t ws = 1000 + static_cast<std::uint64_t>(k++);
    Tensor a = random_tensor(rng, {r, c});
    Tensor b = random_tensor(rng, {r, c});
    Tensor bt = random_tensor(rng, {c, r + 1});
    Tensor bn = random_tensor(rng, {r + 2, c});
    Tensor row = random_tensor(rng, {c});
    Tensor sc = random_tensor(rng, {1});
    Tensor away = random_tensor(rng, {r, c}, 1.0, 0.05);
    Tensor gain = random_tensor(rng, {c});
    Tensor bias = random_tensor(rng, {c});
    Tensor wide = random_tensor(rng, {r, 2 * c});
    Tensor tall = random_tensor(rng, {2 * r + 1, c});
    Tensor table = random_tensor(rng, {r + 3, c});
    Tensor kernel = random_tensor(rng, {3, c});
    Tensor lin_w = random_tensor(rng, {c, 3});
    Tensor lin_b = random_tensor(rng, {3});
    Tensor square = random_tensor(rng, {r + 1, r + 1});

    auto one = [&](const std::string& name, std::function<Tensor(Tape&)> f, std::vector<std::pair<std::string, Tensor>> p,
                   bool stochastic = false) {
      run.check("diffcore", name + tag, [f, ws](Tape& t) { return project(t, f(t), ws); }, p, stochastic);
    };
    one("matmul", [=](Tape& t) { return ad::matmul(t, a, bt); }, {{"a", a}, {"b", bt}});
    one("matmul_transposed", [=](Tape& t) { return ad::matmul(t, a, bn, true); }, {{"a", a}, {"b", bn}});
    one("add", [=](Tape& t) { return ad::add(t, a, b); }, {{"a", a}, {"b", b}});
    one("add_row", [=](Tape& t) { return ad::add(t, a, row); }, {{"a", a}, {"row", row}});
    one("add_scalar", [=](Tape& t) { return ad::add(t, a, sc); }, {{"a", a}, {"s", sc}});
    one("multiply", [=](Tape& t) { return ad::multiply(t, a, b); }, {{"a", a}, {"b", b}});
    one("multiply_row", [=](Tape& t) { return ad::multiply(t, a, row); }, {{"a", a}, {"row", row}});
    one("multiply_scalar", [=](Tape& t) { return ad::multiply(t, a, sc); }, {{"a", a}, {"s", sc}});
    one("concat_rows", [=](Tape& t) { std::array<Tensor, 2> p{a, bn}; return ad::concat(t, p, 0); },
        {{"a", a}, {"b", bn}});
    one("concat_cols", [=](Tape& t) { std::array<Tensor, 2> p{a, b}; return ad::concat(t, p, 1); },
        {{"a", a}, {"b", b}});
    one("slice_rows", [=](Tape& t) { return ad::slice(t, tall, 0, 1, r + 1); }, {{"x", tall}});
    one("slice_cols", [=](Tape& t) { return ad::slice(t, wide, 1, 1, c + 1); }, {{"x", wide}});
    one("embedding_lookup", [=](Tape& t) { return ad::embedding_lookup(t, table, {0, 2, 2, r + 2}); }, {{"table", table}});
    one("linear", [=](Tape& t) { return ad::linear(t, a, lin_w, lin_b); }, {{"x", a}, {"w", lin_w}, {"b", lin_b}});
    if (c > 1) {
      one("layer_norm", [=](Tape& t) { return ad::layer_norm(t, a, gain, bias); },
          {{"x", a}, {"gain", gain}, {"bias", bias}});
    }
    one("softmax", [=](Tape& t) { return ad::softmax(t, a); }, {{"x", a}});
    one("softmax_causal", [=](Tape& t) { return ad::softmax(t, square, true); }, {{"x", square}});
    one("log_softmax", [=](Tape& t) { return ad::log_softmax(t, a); }, {{"x", a}});
    one("sigmoid", [=](Tape& t) { return ad::sigmoid(t, a); }, {{"x", a}});
    one("swish", [=](Tape& t) { return ad::swish(t, a); }, {{"x", a}});
    one("glu", [=](Tape& t) { return ad::glu(t, wide); }, {{"x", wide}});
    one("relu", [=](Tape& t) { return ad::relu(t, away); }, {{"x", away}});
    one("tanh", [=](Tape& t) { return ad::tanh(t, a); }, {{"x", a}});
    one("depthwise_conv1d_causal", [=](Tape& t) { return ad::depthwise_conv1d_causal(t, tall, kernel, row); },
        {{"x", tall}, {"w", kernel}, {"bias", row}});
    one("max_pool1d_time", [=](Tape& t) { return ad::max_pool1d_time(t, tall); }, {{"x", tall}});
    one("dropout", [=](Tape& t) { return ad::dropout(t, a, 0.3, true); }, {{"x", a}}, true);
    one("sum", [=](Tape& t) { return ad::sum(t, ad::multiply(t, a, a)); }, {{"x", a}});
    one("mean", [=](Tape& t) { return ad::mean(t, ad::multiply(t, a, a)); }, {{"x", a}});
    one("transpose", [=](Tape& t) { return ad::transpose(t, a); }, {{"x", a}});
    one("scale", [=](Tape& t) { return ad::scale(t, a, -1.7); }, {{"x", a}});
  }
}

void rnnt_suite(Runner& run, std::mt19937_64& rng) {
  const std::array<std::array<std::size_t, 3>, 3> dims{{{1, 1, 2}, {3, 2, 3}, {4, 3, 2}}};
  for (const auto& [T, U, V] : dims) {
    Tensor logits = random_tensor(rng, {T * (U + 1), V + 1});
    TokenSeq labels(U);
    std::uniform_int_distribution<int> pick(1, static_cast<int>(V));
    for (auto& y : labels) y = pick(rng);
    const std::string name = "T" + std::to_string(T) + "_U" + std::to_string(U) + "_V" + std::to_string(V);
    run.check("rnnt", name,
              [=](Tape& t) { return train::rnnt_loss_node(t, ad::log_softmax(t, logits), T, labels, V); },
              {{"logits", logits}});
  }
}

void distill_suite(Runner& run, std::mt19937_64& rng) {
  const std::array<std::array<std::size_t, 3>, 3> dims{{{1, 0, 1}, {2, 2, 3}, {3, 1, 4}}};
  for (const auto& [T, U, V] : dims) {
    Tensor logits = random_tensor(rng, {T * (U + 1), V + 1});
    Tensor tlogits = random_tensor(rng, {T * (U + 1), V + 1});
    for (double tau : {1.0, 2.0}) {
      const rnnt::Lattice teacher =
          distill::tempered_lattice(T, U, V, {tlogits.data().begin(), tlogits.data().end()}, tau);
      char name[64];
      std::snprintf(name, sizeof name, "T%zu_U%zu_V%zu_tau%.0f", T, U, V, tau);
      run.check("distill", name,
                [=](Tape& t) {
                  return train::kd_loss_node(t, ad::log_softmax(t, ad::scale(t, logits, 1.0 / tau)), teacher);
                },
                {{"logits", logits}});
    }
  }
  // (1 - alpha) L_transducer + alpha L_KD through the shared logits.
  const std::size_t T = 3, U = 2, V = 3;
  Tensor logits = random_tensor(rng, {T * (U + 1), V + 1});
  Tensor tlogits = random_tensor(rng, {T * (U + 1), V + 1});
  const rnnt::Lattice teacher = rnnt::Lattice::from_logits(T, U, V, {tlogits.data().begin(), tlogits.data().end()});
  const TokenSeq labels{2, 1};
  run.check("distill", "total_loss_alpha0.3",
            [=](Tape& t) {
              Tensor lp = ad::log_softmax(t, logits);
              Tensor lt = train::rnnt_loss_node(t, lp, T, labels, V);
              Tensor lk = train::kd_loss_node(t, lp, teacher);
              return ad::add(t, ad::scale(t, lt, 0.7), ad::scale(t, lk, 0.3));
            },
            {{"logits", logits}});
}

void model_suite(Runner& run, std::mt19937_64& rng) {
  model::ModelConfig cfg;
  cfg.feature_dim = 5;
  cfg.encoder.num_layers = 2;
  cfg.encoder.model_dim = 8;
  cfg.encoder.attention_heads = 2;
  cfg.encoder.ff_expansion = 2;
  cfg.encoder.conv_kernel = 3;
  cfg.encoder.pooling_layers = 1;
  cfg.encoder.max_positions = 16;
  cfg.decoder.num_layers = 2;
  cfg.decoder.hidden_dim = 6;
  cfg.joint_dim = 6;
  cfg.vocab_size = 3;
  auto student = std::make_shared<model::ConformerTransducer>(cfg, rng());
  auto teacher = std::make_shared<model::ConformerTransducer>(cfg, rng());
  // Give zero-initialised biases some value so their gradients are generic.
  std::normal_distribution<double> n(0.0, 0.1);
  for (const auto& [name, t] : student->parameters()) {
    auto d = Tensor(t).mutable_data();
    for (double& x : d) x += n(rng);
  }
  frontend::FeatureMatrix f;
  f.frames = 7;
  f.dims = cfg.feature_dim;
  f.values.resize(f.frames * f.dims);
  for (double& x : f.values) x = n(rng) * 10.0;
  const TokenSeq labels{1, 3};
  const std::size_t T = student->encoded_frames(f.frames);
  Tape tt(std::nullopt, false);
  const rnnt::Lattice tl = model::to_lattice(teacher->lattice_log_probs(tt, f, labels, 1.0, false), T, 2, 3);

  std::vector<std::pair<std::string, Tensor>> params(student->parameters().begin(), student->parameters().end());
  run.check("model", "tiny_transducer_distill_loss",
            [=](Tape& t) {
              Tensor lp = student->lattice_log_probs(t, f, labels, 1.0, /*training=*/true);
              Tensor lt = train::rnnt_loss_node(t, lp, T, labels, 3);
              Tensor lk = train::kd_loss_node(t, lp, tl);
              return ad::add(t, ad::scale(t, lt, 0.98), ad::scale(t, lk, 0.02));
            },
            params, /*stochastic=*/true);
}

}  // namespace

std::vector<SuiteCase> run_gradient_suites(const SuiteOptions& options, std::ostream* log) {
  Runner run(options, log);
  std::mt19937_64 rng(options.seed);
  diffcore_suite(run, rng);
  rnnt_suite(run, rng);
  distill_suite(run, rng);
  model_suite(run, rng);
  return run.cases_;
}

}  // namespace ctkd::verify
