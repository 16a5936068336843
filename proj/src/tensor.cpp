#include "token2vec/tensor.hpp"

#include <cmath>
#include <sstream>

#include "token2vec/errors.hpp"

namespace token2vec {

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::vector<double>& detail::TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor() : Tensor(Shape{0}) {}

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), requires_grad); }

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{}, {value}, requires_grad); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  std::vector<double> values;
  std::size_t ncols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != ncols) throw DimensionError("tensor: ragged matrix literal");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor(Shape{rows.size(), ncols}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

std::size_t Tensor::cols() const {
  const auto& s = impl_->shape;
  return s.empty() ? 1 : s.back();
}

std::size_t Tensor::rows() const {
  const auto& s = impl_->shape;
  if (s.empty()) return 1;
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor of shape " + shape_to_string(shape()) + " is not a scalar");
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

GradTape::GradTape() : previous_(g_active_tape) { g_active_tape = this; }

GradTape::~GradTape() {
  if (g_active_tape == this) g_active_tape = previous_;
}

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

void GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(loss.shape()));
  }
  if (consumed_) throw ContractError("backward: tape already replayed");
  if (!loss.requires_grad() || loss.impl()->origin != this) {
    throw ContractError("backward: loss was not produced under this tape");
  }
  consumed_ = true;
  loss.impl()->grad_buffer()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

}  // namespace token2vec
