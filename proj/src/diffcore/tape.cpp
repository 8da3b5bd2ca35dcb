// SPDX-License-Identifier: Apache-2.0
#include "ctkd/diffcore/tape.hpp"

#include <algorithm>
#include <cmath>

#include "ctkd/common/errors.hpp"
#include "kernels.hpp"

namespace ctkd::ad {
namespace {

using Vec = std::vector<double>;

[[noreturn]] void shape_fail(OpKind kind, const std::string& what) {
  throw ShapeError(std::string(op_name(kind)) + ": " + what);
}

void expect_inputs(OpKind kind, std::span<const Tensor> in, std::size_t lo, std::size_t hi) {
  if (in.size() < lo || in.size() > hi) {
    shape_fail(kind, "expected " + std::to_string(lo) + (lo == hi ? "" : "-" + std::to_string(hi)) +
                         " inputs, got " + std::to_string(in.size()));
  }
  for (const auto& t : in) {
    if (!t.defined()) shape_fail(kind, "undefined input tensor");
  }
}

void expect_rank2(OpKind kind, const Tensor& t, const char* which) {
  if (t.rank() != 2) shape_fail(kind, std::string(which) + " must be rank 2, got " + shape_string(t.shape()));
}

// How `b` combines with `a` in add/multiply.
enum class Broadcast { same, row, scalar };

Broadcast broadcast_kind(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.numel() == 1) return Broadcast::scalar;
  if (b.numel() == a.cols() && (b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1))) return Broadcast::row;
  shape_fail(kind, "cannot combine " + shape_string(a.shape()) + " with " + shape_string(b.shape()));
}

inline double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_finite(OpKind kind, const std::string& name, const Tensor& out) {
  for (double v : out.data()) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by op '" +
                         (kind == OpKind::custom ? name : std::string(op_name(kind))) + "'");
    }
  }
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::multiply: return "multiply";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::embedding_lookup: return "embedding_lookup";
    case OpKind::linear: return "linear";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::swish: return "swish";
    case OpKind::glu: return "glu";
    case OpKind::relu: return "relu";
    case OpKind::depthwise_conv1d_causal: return "depthwise_conv1d_causal";
    case OpKind::max_pool1d_time: return "max_pool1d_time";
    case OpKind::dropout: return "dropout";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::tanh: return "tanh";
    case OpKind::transpose: return "transpose";
    case OpKind::scale: return "scale";
    case OpKind::custom: return "custom";
  }
  return "unknown";
}

// --- Gradients -------------------------------------------------------------

Tensor Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), it->second);
}

void Gradients::accumulate_into(Tensor& t) const {
  auto it = grads_.find(t.id());
  std::vector<double> g(t.grad().begin(), t.grad().end());
  if (g.empty()) g.assign(t.numel(), 0.0);
  if (it != grads_.end()) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += it->second[i];
  }
  t.set_grad(std::move(g));
}

// --- Tape ------------------------------------------------------------------

Tape::Tape(std::optional<std::uint64_t> seed, bool recording)
    : seed_(seed), recording_(recording), rng_(seed.value_or(0)) {}

std::vector<OpKind> Tape::op_kinds() const {
  std::vector<OpKind> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.kind);
  return out;
}

double Tape::next_uniform() {
  used_randomness_ = true;
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

Tensor Tape::push(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs, Tensor output,
                  std::vector<double> aux) {
  check_finite(kind, {}, output);
  bool needs_grad = false;
  for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
  if (!recording_ || !needs_grad) return output;
  output.set_requires_grad(true);
  Record rec;
  rec.kind = kind;
  rec.attrs = attrs;
  rec.inputs.assign(inputs.begin(), inputs.end());
  rec.producers.reserve(inputs.size());
  for (const auto& t : inputs) {
    auto it = producer_of_.find(t.id());
    rec.producers.push_back(it == producer_of_.end() ? -1 : it->second);
  }
  rec.output = output;
  rec.aux = std::move(aux);
  producer_of_[output.id()] = static_cast<long>(records_.size());
  records_.push_back(std::move(rec));
  return output;
}

Tensor Tape::custom(std::string name, std::span<const Tensor> inputs, Tensor output, CustomBackward backward) {
  check_finite(OpKind::custom, name, output);
  bool needs_grad = false;
  for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
  if (!recording_ || !needs_grad) return output;
  output.set_requires_grad(true);
  Record rec;
  rec.kind = OpKind::custom;
  rec.inputs.assign(inputs.begin(), inputs.end());
  for (const auto& t : inputs) {
    auto it = producer_of_.find(t.id());
    rec.producers.push_back(it == producer_of_.end() ? -1 : it->second);
  }
  rec.output = output;
  rec.name = std::move(name);
  rec.custom_backward = std::move(backward);
  producer_of_[output.id()] = static_cast<long>(records_.size());
  records_.push_back(std::move(rec));
  return output;
}

Tensor Tape::apply(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs) {
  switch (kind) {
    case OpKind::matmul: {
      expect_inputs(kind, in, 2, 2);
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      expect_rank2(kind, a, "lhs");
      expect_rank2(kind, b, "rhs");
      const std::size_t m = a.shape()[0], k = a.shape()[1];
      const std::size_t bk = attrs.flag ? b.shape()[1] : b.shape()[0];
      const std::size_t n = attrs.flag ? b.shape()[0] : b.shape()[1];
      if (bk != k) {
        shape_fail(kind, "inner dimensions differ: " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()) + (attrs.flag ? "^T" : ""));
      }
      Vec out(m * n, 0.0);
      if (attrs.flag) {
        kernels::gemm_nt(m, k, n, a.data().data(), b.data().data(), out.data());
      } else {
        kernels::gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
      }
      return push(kind, in, attrs, Tensor({m, n}, std::move(out)), {});
    }
    case OpKind::add:
    case OpKind::multiply: {
      expect_inputs(kind, in, 2, 2);
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      const auto bc = broadcast_kind(kind, a, b);
      const auto ad = a.data();
      const auto bd = b.data();
      Vec out(a.numel());
      const std::size_t cols = a.cols();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double bv = bc == Broadcast::same ? bd[i] : bc == Broadcast::row ? bd[i % cols] : bd[0];
        out[i] = kind == OpKind::add ? ad[i] + bv : ad[i] * bv;
      }
      return push(kind, in, attrs, Tensor(a.shape(), std::move(out)), {});
    }
    case OpKind::concat: {
      if (in.empty()) shape_fail(kind, "needs at least one input");
      expect_inputs(kind, in, 1, in.size());
      for (const auto& t : in) expect_rank2(kind, t, "input");
      if (attrs.axis > 1) shape_fail(kind, "axis must be 0 or 1");
      const std::size_t other = attrs.axis == 0 ? in[0].shape()[1] : in[0].shape()[0];
      std::size_t total = 0;
      for (const auto& t : in) {
        if ((attrs.axis == 0 ? t.shape()[1] : t.shape()[0]) != other) {
          shape_fail(kind, "mismatched extent " + shape_string(t.shape()) + " vs " + shape_string(in[0].shape()));
        }
        total += t.shape()[attrs.axis];
      }
      Vec out;
      out.reserve(total * other);
      Shape shape;
      if (attrs.axis == 0) {
        for (const auto& t : in) out.insert(out.end(), t.data().begin(), t.data().end());
        shape = {total, other};
      } else {
        for (std::size_t r = 0; r < other; ++r) {
          for (const auto& t : in) {
            const std::size_t c = t.shape()[1];
            auto row = t.data().subspan(r * c, c);
            out.insert(out.end(), row.begin(), row.end());
          }
        }
        shape = {other, total};
      }
      return push(kind, in, attrs, Tensor(shape, std::move(out)), {});
    }
    case OpKind::slice: {
      expect_inputs(kind, in, 1, 1);
      const Tensor& x = in[0];
      expect_rank2(kind, x, "input");
      if (attrs.axis > 1) shape_fail(kind, "axis must be 0 or 1");
      const std::size_t extent = x.shape()[attrs.axis];
      if (attrs.begin >= attrs.end || attrs.end > extent) {
        shape_fail(kind, "range [" + std::to_string(attrs.begin) + "," + std::to_string(attrs.end) +
                             ") invalid for extent " + std::to_string(extent));
      }
      const std::size_t rows = x.shape()[0], cols = x.shape()[1];
      Vec out;
      Shape shape;
      if (attrs.axis == 0) {
        auto part = x.data().subspan(attrs.begin * cols, (attrs.end - attrs.begin) * cols);
        out.assign(part.begin(), part.end());
        shape = {attrs.end - attrs.begin, cols};
      } else {
        const std::size_t w = attrs.end - attrs.begin;
        out.reserve(rows * w);
        for (std::size_t r = 0; r < rows; ++r) {
          auto part = x.data().subspan(r * cols + attrs.begin, w);
          out.insert(out.end(), part.begin(), part.end());
        }
        shape = {rows, w};
      }
      return push(kind, in, attrs, Tensor(shape, std::move(out)), {});
    }
    case OpKind::embedding_lookup: {
      expect_inputs(kind, in, 1, 1);
      const Tensor& table = in[0];
      expect_rank2(kind, table, "table");
      if (attrs.indices.empty()) shape_fail(kind, "no indices");
      const std::size_t n = table.shape()[0], d = table.shape()[1];
      Vec out;
      out.reserve(attrs.indices.size() * d);
      for (auto idx : attrs.indices) {
        if (idx >= n) shape_fail(kind, "index " + std::to_string(idx) + " out of range " + std::to_string(n));
        auto row = table.data().subspan(idx * d, d);
        out.insert(out.end(), row.begin(), row.end());
      }
      return push(kind, in, attrs, Tensor({attrs.indices.size(), d}, std::move(out)), {});
    }
    case OpKind::linear: {
      expect_inputs(kind, in, 2, 3);
      const Tensor& x = in[0];
      const Tensor& w = in[1];
      expect_rank2(kind, x, "input");
      expect_rank2(kind, w, "weight");
      const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
      if (w.shape()[0] != k) {
        shape_fail(kind, "input " + shape_string(x.shape()) + " does not match weight " + shape_string(w.shape()));
      }
      Vec out(m * n, 0.0);
      if (in.size() == 3) {
        if (in[2].numel() != n) shape_fail(kind, "bias size " + std::to_string(in[2].numel()) + " != " + std::to_string(n));
        for (std::size_t i = 0; i < m; ++i) std::copy(in[2].data().begin(), in[2].data().end(), out.begin() + i * n);
      }
      kernels::gemm_nn(m, k, n, x.data().data(), w.data().data(), out.data());
      return push(kind, in, attrs, Tensor({m, n}, std::move(out)), {});
    }
    case OpKind::layer_norm: {
      expect_inputs(kind, in, 3, 3);
      const Tensor& x = in[0];
      const std::size_t m = x.rows(), n = x.cols();
      if (in[1].numel() != n || in[2].numel() != n) shape_fail(kind, "gain/bias must have " + std::to_string(n) + " values");
      const double eps = attrs.scalar;
      if (!(eps > 0)) throw ContractError("layer_norm: epsilon must be positive");
      Vec out(x.numel());
      Vec aux(2 * m);  // mean, reciprocal stddev per row
      const auto xd = x.data();
      const auto g = in[1].data();
      const auto b = in[2].data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = xd.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (row[j] - mu) * rstd * g[j] + b[j];
        aux[2 * i] = mu;
        aux[2 * i + 1] = rstd;
      }
      return push(kind, in, attrs, Tensor(x.shape(), std::move(out)), std::move(aux));
    }
    case OpKind::softmax:
    case OpKind::log_softmax: {
      expect_inputs(kind, in, 1, 1);
      const Tensor& x = in[0];
      const std::size_t m = x.rows(), n = x.cols();
      const bool causal = kind == OpKind::softmax && attrs.flag;
      if (causal && (x.rank() != 2 || m != n)) shape_fail(kind, "causal softmax needs a square matrix");
      Vec out(x.numel(), 0.0);
      const auto xd = x.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = xd.data() + i * n;
        const std::size_t len = causal ? i + 1 : n;
        double mx = row[0];
        for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < len; ++j) z += std::exp(row[j] - mx);
        if (kind == OpKind::softmax) {
          for (std::size_t j = 0; j < len; ++j) out[i * n + j] = std::exp(row[j] - mx) / z;
        } else {
          const double lz = mx + std::log(z);
          for (std::size_t j = 0; j < len; ++j) out[i * n + j] = row[j] - lz;
        }
      }
      return push(kind, in, attrs, Tensor(x.shape(), std::move(out)), {});
    }
    case OpKind::sigmoid:
    case OpKind::swish:
    case OpKind::relu:
    case OpKind::tanh: {
      expect_inputs(kind, in, 1, 1);
      const auto xd = in[0].data();
      Vec out(xd.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xd[i];
        switch (kind) {
          case OpKind::sigmoid: out[i] = sigmoid_scalar(v); break;
          case OpKind::swish: out[i] = v * sigmoid_scalar(v); break;
          case OpKind::relu: out[i] = v > 0 ? v : 0.0; break;
          default: out[i] = std::tanh(v); break;
        }
      }
      return push(kind, in, attrs, Tensor(in[0].shape(), std::move(out)), {});
    }
    case OpKind::glu: {
      expect_inputs(kind, in, 1, 1);
      const Tensor& x = in[0];
      expect_rank2(kind, x, "input");
      const std::size_t m = x.shape()[0], n2 = x.shape()[1];
      if (n2 % 2) shape_fail(kind, "column count must be even, got " + std::to_string(n2));
      const std::size_t n = n2 / 2;
      Vec out(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          out[i * n + j] = x.at(i, j) * sigmoid_scalar(x.at(i, j + n));
        }
      }
      return push(kind, in, attrs, Tensor({m, n}, std::move(out)), {});
    }
    case OpKind::depthwise_conv1d_causal: {
      expect_inputs(kind, in, 3, 3);
      const Tensor& x = in[0];
      const Tensor& w = in[1];
      expect_rank2(kind, x, "input");
      expect_rank2(kind, w, "kernel");
      const std::size_t t_len = x.shape()[0], c = x.shape()[1], k = w.shape()[0];
      if (w.shape()[1] != c || in[2].numel() != c) {
        shape_fail(kind, "kernel " + shape_string(w.shape()) + " / bias do not match channels " + std::to_string(c));
      }
      Vec out(t_len * c);
      const auto xd = x.data();
      const auto wd = w.data();
      const auto bd = in[2].data();
      for (std::size_t t = 0; t < t_len; ++t) {
        double* o = out.data() + t * c;
        for (std::size_t ch = 0; ch < c; ++ch) o[ch] = bd[ch];
        for (std::size_t j = 0; j < k; ++j) {
          // tap j reads input frame t - (k - 1) + j
          if (t + j + 1 < k) continue;
          const std::size_t s = t + j + 1 - k;
          const double* xs = xd.data() + s * c;
          const double* wj = wd.data() + j * c;
          for (std::size_t ch = 0; ch < c; ++ch) o[ch] += wj[ch] * xs[ch];
        }
      }
      return push(kind, in, attrs, Tensor({t_len, c}, std::move(out)), {});
    }
    case OpKind::max_pool1d_time: {
      expect_inputs(kind, in, 1, 1);
      const Tensor& x = in[0];
      expect_rank2(kind, x, "input");
      const std::size_t t_out = x.shape()[0] / 2, c = x.shape()[1];
      if (t_out == 0) shape_fail(kind, "needs at least 2 frames, got " + std::to_string(x.shape()[0]));
      Vec out(t_out * c);
      Vec arg(t_out * c);  // source row of each output
      for (std::size_t t = 0; t < t_out; ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double a = x.at(2 * t, ch), b = x.at(2 * t + 1, ch);
          const bool first = a >= b;
          out[t * c + ch] = first ? a : b;
          arg[t * c + ch] = static_cast<double>(first ? 2 * t : 2 * t + 1);
        }
      }
      return push(kind, in, attrs, Tensor({t_out, c}, std::move(out)), std::move(arg));
    }
    case OpKind::dropout: {
      expect_inputs(kind, in, 1, 1);
      const double rate = attrs.scalar;
      if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout: rate must be in [0,1)");
      if (!attrs.flag || rate == 0.0) return in[0];
      if (!seed_) throw ContractError("dropout in training mode needs a seeded tape");
      const auto xd = in[0].data();
      Vec mask(xd.size());
      Vec out(xd.size());
      const double keep_scale = 1.0 / (1.0 - rate);
      for (std::size_t i = 0; i < xd.size(); ++i) {
        mask[i] = next_uniform() < rate ? 0.0 : keep_scale;
        out[i] = xd[i] * mask[i];
      }
      return push(kind, in, attrs, Tensor(in[0].shape(), std::move(out)), std::move(mask));
    }
    case OpKind::sum:
    case OpKind::mean: {
      expect_inputs(kind, in, 1, 1);
      double s = 0.0;
      for (double v : in[0].data()) s += v;
      if (kind == OpKind::mean) s /= static_cast<double>(in[0].numel());
      return push(kind, in, attrs, Tensor({1}, {s}), {});
    }
    case OpKind::transpose: {
      expect_inputs(kind, in, 1, 1);
      const Tensor& x = in[0];
      expect_rank2(kind, x, "input");
      const std::size_t m = x.shape()[0], n = x.shape()[1];
      Vec out(m * n);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.at(i, j);
      }
      return push(kind, in, attrs, Tensor({n, m}, std::move(out)), {});
    }
    case OpKind::scale: {
      expect_inputs(kind, in, 1, 1);
      Vec out(in[0].data().begin(), in[0].data().end());
      for (double& v : out) v *= attrs.scalar;
      return push(kind, in, attrs, Tensor(in[0].shape(), std::move(out)), {});
    }
    case OpKind::custom:
      throw ContractError("custom ops are recorded through Tape::custom");
  }
  throw ContractError("unknown op kind");
}

void Tape::backward_record(const Record& rec, const Vec& gy, std::span<Vec*> gin) const {
  const auto& in = rec.inputs;
  const auto& y = rec.output;
  switch (rec.kind) {
    case OpKind::matmul: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      const std::size_t m = a.shape()[0], k = a.shape()[1], n = y.shape()[1];
      if (gin[0]) {
        // dA = dY * B^T  (or dY * B when B was transposed)
        if (rec.attrs.flag) {
          kernels::gemm_nn(m, n, k, gy.data(), b.data().data(), gin[0]->data());
        } else {
          kernels::gemm_nt(m, n, k, gy.data(), b.data().data(), gin[0]->data());
        }
      }
      if (gin[1]) {
        if (rec.attrs.flag) {
          // B is [n x k]: dB = dY^T * A
          kernels::gemm_tn(n, m, k, gy.data(), a.data().data(), gin[1]->data());
        } else {
          kernels::gemm_tn(k, m, n, a.data().data(), gy.data(), gin[1]->data());
        }
      }
      return;
    }
    case OpKind::add:
    case OpKind::multiply: {
      const Tensor& a = in[0];
      const Tensor& b = in[1];
      const Broadcast bc = a.shape() == b.shape() ? Broadcast::same
                           : b.numel() == 1      ? Broadcast::scalar
                                                 : Broadcast::row;
      const std::size_t cols = a.cols();
      const auto ad = a.data();
      const auto bd = b.data();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const std::size_t bi = bc == Broadcast::same ? i : bc == Broadcast::row ? i % cols : 0;
        if (rec.kind == OpKind::add) {
          if (gin[0]) (*gin[0])[i] += gy[i];
          if (gin[1]) (*gin[1])[bi] += gy[i];
        } else {
          if (gin[0]) (*gin[0])[i] += gy[i] * bd[bi];
          if (gin[1]) (*gin[1])[bi] += gy[i] * ad[i];
        }
      }
      return;
    }
    case OpKind::concat: {
      if (rec.attrs.axis == 0) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < in.size(); ++p) {
          const std::size_t len = in[p].numel();
          if (gin[p]) {
            for (std::size_t i = 0; i < len; ++i) (*gin[p])[i] += gy[off + i];
          }
          off += len;
        }
      } else {
        const std::size_t rows = y.shape()[0], total = y.shape()[1];
        std::size_t col0 = 0;
        for (std::size_t p = 0; p < in.size(); ++p) {
          const std::size_t c = in[p].shape()[1];
          if (gin[p]) {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < c; ++j) (*gin[p])[r * c + j] += gy[r * total + col0 + j];
            }
          }
          col0 += c;
        }
      }
      return;
    }
    case OpKind::slice: {
      if (!gin[0]) return;
      const std::size_t rows = in[0].shape()[0], cols = in[0].shape()[1];
      if (rec.attrs.axis == 0) {
        const std::size_t off = rec.attrs.begin * cols;
        for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[off + i] += gy[i];
      } else {
        const std::size_t w = rec.attrs.end - rec.attrs.begin;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < w; ++j) (*gin[0])[r * cols + rec.attrs.begin + j] += gy[r * w + j];
        }
      }
      return;
    }
    case OpKind::embedding_lookup: {
      if (!gin[0]) return;
      const std::size_t d = in[0].shape()[1];
      for (std::size_t r = 0; r < rec.attrs.indices.size(); ++r) {
        const std::size_t idx = rec.attrs.indices[r];
        for (std::size_t j = 0; j < d; ++j) (*gin[0])[idx * d + j] += gy[r * d + j];
      }
      return;
    }
    case OpKind::linear: {
      const Tensor& x = in[0];
      const Tensor& w = in[1];
      const std::size_t m = x.shape()[0], k = x.shape()[1], n = w.shape()[1];
      if (gin[0]) kernels::gemm_nt(m, n, k, gy.data(), w.data().data(), gin[0]->data());
      if (gin[1]) kernels::gemm_tn(k, m, n, x.data().data(), gy.data(), gin[1]->data());
      if (in.size() == 3 && gin[2]) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) (*gin[2])[j] += gy[i * n + j];
        }
      }
      return;
    }
    case OpKind::layer_norm: {
      const Tensor& x = in[0];
      const std::size_t m = x.rows(), n = x.cols();
      const auto xd = x.data();
      const auto g = in[1].data();
      std::vector<double> xhat(n), dxhat(n);
      for (std::size_t i = 0; i < m; ++i) {
        const double mu = rec.aux[2 * i], rstd = rec.aux[2 * i + 1];
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          xhat[j] = (xd[i * n + j] - mu) * rstd;
          dxhat[j] = gy[i * n + j] * g[j];
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * xhat[j];
          if (gin[1]) (*gin[1])[j] += gy[i * n + j] * xhat[j];
          if (gin[2]) (*gin[2])[j] += gy[i * n + j];
        }
        mean_d /= static_cast<double>(n);
        mean_dx /= static_cast<double>(n);
        if (gin[0]) {
          for (std::size_t j = 0; j < n; ++j) {
            (*gin[0])[i * n + j] += rstd * (dxhat[j] - mean_d - xhat[j] * mean_dx);
          }
        }
      }
      return;
    }
    case OpKind::softmax: {
      if (!gin[0]) return;
      const std::size_t m = y.rows(), n = y.cols();
      const auto yd = y.data();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[i * n + j] * yd[i * n + j];
        for (std::size_t j = 0; j < n; ++j) (*gin[0])[i * n + j] += yd[i * n + j] * (gy[i * n + j] - dot);
      }
      return;
    }
    case OpKind::log_softmax: {
      if (!gin[0]) return;
      const std::size_t m = y.rows(), n = y.cols();
      const auto yd = y.data();
      for (std::size_t i = 0; i < m; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += gy[i * n + j];
        for (std::size_t j = 0; j < n; ++j) {
          (*gin[0])[i * n + j] += gy[i * n + j] - std::exp(yd[i * n + j]) * total;
        }
      }
      return;
    }
    case OpKind::sigmoid:
    case OpKind::swish:
    case OpKind::relu:
    case OpKind::tanh: {
      if (!gin[0]) return;
      const auto xd = in[0].data();
      const auto yd = y.data();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        double d = 0.0;
        switch (rec.kind) {
          case OpKind::sigmoid: d = yd[i] * (1.0 - yd[i]); break;
          case OpKind::swish: {
            const double s = sigmoid_scalar(xd[i]);
            d = s + xd[i] * s * (1.0 - s);
            break;
          }
          case OpKind::relu: d = xd[i] > 0 ? 1.0 : 0.0; break;
          default: d = 1.0 - yd[i] * yd[i]; break;
        }
        (*gin[0])[i] += gy[i] * d;
      }
      return;
    }
    case OpKind::glu: {
      if (!gin[0]) return;
      const Tensor& x = in[0];
      const std::size_t m = x.shape()[0], n = x.shape()[1] / 2;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double a = x.at(i, j);
          const double s = sigmoid_scalar(x.at(i, j + n));
          const double g = gy[i * n + j];
          (*gin[0])[i * 2 * n + j] += g * s;
          (*gin[0])[i * 2 * n + j + n] += g * a * s * (1.0 - s);
        }
      }
      return;
    }
    case OpKind::depthwise_conv1d_causal: {
      const Tensor& x = in[0];
      const Tensor& w = in[1];
      const std::size_t t_len = x.shape()[0], c = x.shape()[1], k = w.shape()[0];
      const auto xd = x.data();
      const auto wd = w.data();
      for (std::size_t t = 0; t < t_len; ++t) {
        const double* g = gy.data() + t * c;
        if (gin[2]) {
          for (std::size_t ch = 0; ch < c; ++ch) (*gin[2])[ch] += g[ch];
        }
        for (std::size_t j = 0; j < k; ++j) {
          if (t + j + 1 < k) continue;
          const std::size_t s = t + j + 1 - k;
          for (std::size_t ch = 0; ch < c; ++ch) {
            if (gin[0]) (*gin[0])[s * c + ch] += g[ch] * wd[j * c + ch];
            if (gin[1]) (*gin[1])[j * c + ch] += g[ch] * xd[s * c + ch];
          }
        }
      }
      return;
    }
    case OpKind::max_pool1d_time: {
      if (!gin[0]) return;
      const std::size_t c = y.shape()[1];
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const auto src = static_cast<std::size_t>(rec.aux[i]);
        (*gin[0])[src * c + i % c] += gy[i];
      }
      return;
    }
    case OpKind::dropout: {
      if (!gin[0]) return;
      for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += gy[i] * rec.aux[i];
      return;
    }
    case OpKind::sum:
    case OpKind::mean: {
      if (!gin[0]) return;
      const double g = rec.kind == OpKind::sum ? gy[0] : gy[0] / static_cast<double>(in[0].numel());
      for (double& v : *gin[0]) v += g;
      return;
    }
    case OpKind::transpose: {
      if (!gin[0]) return;
      const std::size_t m = in[0].shape()[0], n = in[0].shape()[1];
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) (*gin[0])[i * n + j] += gy[j * m + i];
      }
      return;
    }
    case OpKind::scale: {
      if (!gin[0]) return;
      for (std::size_t i = 0; i < gy.size(); ++i) (*gin[0])[i] += gy[i] * rec.attrs.scalar;
      return;
    }
    case OpKind::custom:
      rec.custom_backward(gy, gin);
      return;
  }
}

Gradients Tape::backpropagate(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backpropagate needs a single-element loss tensor");
  }
  Gradients out;
  auto root = producer_of_.find(loss.id());
  if (root == producer_of_.end()) {
    // Loss does not depend on anything that requires a gradient.
    if (loss.requires_grad()) out.grads_[loss.id()] = {1.0};
    return out;
  }
  const long last = root->second;
  std::vector<Vec> grads(static_cast<std::size_t>(last) + 1);
  grads[static_cast<std::size_t>(last)].assign(1, 1.0);

  std::vector<Vec*> gin;
  for (long r = last; r >= 0; --r) {
    auto& gy = grads[static_cast<std::size_t>(r)];
    if (gy.empty()) continue;
    const Record& rec = records_[static_cast<std::size_t>(r)];
    gin.assign(rec.inputs.size(), nullptr);
    for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
      const Tensor& t = rec.inputs[i];
      if (!t.requires_grad()) continue;
      Vec* slot = nullptr;
      if (rec.producers[i] >= 0) {
        slot = &grads[static_cast<std::size_t>(rec.producers[i])];
      } else {
        slot = &out.grads_[t.id()];
      }
      if (slot->empty()) slot->assign(t.numel(), 0.0);
      gin[i] = slot;
    }
    backward_record(rec, gy, gin);
    gy.clear();
    gy.shrink_to_fit();
  }
  return out;
}

}  // namespace ctkd::ad
