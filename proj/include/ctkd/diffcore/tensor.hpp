// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ctkd::ad {

using Shape = std::vector<std::size_t>;

std::size_t num_elements(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with shared ownership.
///
/// Copies of a Tensor alias the same storage; parameters shared between a
/// model's submodules (tied weights) are the same Tensor. Gradients produced
/// by a Tape live in the returned Gradients object, never in the tensor, so a
/// parameter can be read by several tapes on different threads.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value);
  /// Deep copy with the same requires_grad flag.
  Tensor clone() const;

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  /// Leading extent for rank-2 tensors, 1 for vectors.
  std::size_t rows() const;
  /// Trailing extent.
  std::size_t cols() const { return impl_->shape.back(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  /// Optional gradient slot, filled by Gradients::store_into.
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void set_grad(std::vector<double> grad);
  void clear_grad() { impl_->grad.clear(); }

  /// Identity of the underlying storage.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

}  // namespace ctkd::ad
