// SPDX-License-Identifier: Apache-2.0
#include "ctkd/diffcore/tensor.hpp"

#include "ctkd/common/errors.hpp"

namespace ctkd::ad {

std::size_t num_elements(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (num_elements(shape) != data.size()) {
    throw ShapeError("shape " + shape_string(shape) + " holds " +
                     std::to_string(num_elements(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = num_elements(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  t.impl_->grad = impl_->grad;
  return t;
}

std::size_t Tensor::rows() const { return rank() == 1 ? 1 : impl_->shape[0]; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + shape_string(shape()));
  }
  return impl_->data[0];
}

void Tensor::set_grad(std::vector<double> grad) {
  if (grad.size() != numel()) throw ShapeError("gradient size does not match tensor");
  impl_->grad = std::move(grad);
}

}  // namespace ctkd::ad
