#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace token2vec {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  const void* origin = nullptr;  // tape that produced this tensor, if any

  std::vector<double>& grad_buffer();
};
}  // namespace detail

/// Dense row-major tensor of doubles.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets the tape accumulate gradients into parameters held elsewhere. Use
/// clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t dim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  // Size of the last dimension; 1 for a scalar.
  std::size_t cols() const;
  // Product of all but the last dimension.
  std::size_t rows() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  // Accumulated gradient; all zeros when nothing reached this tensor.
  std::vector<double> grad() const;
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records differentiable operations in execution order for one forward
/// pass. Constructing a tape makes it the active tape of the calling thread
/// until it is destroyed; ops executed while no tape is active are not
/// recorded.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape* active();

  void record(std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and replays the recorded ops in reverse.
  // Gradients accumulate into every reachable tensor with requires_grad.
  void backward(const Tensor& loss);

  std::size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  GradTape* previous_ = nullptr;
  bool consumed_ = false;
};

// Suspends recording on this thread (e.g. for evaluation passes).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

}  // namespace token2vec
