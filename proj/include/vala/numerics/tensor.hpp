#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vala {

using Shape = std::vector<std::size_t>;

/// Raised for any rank/extent disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {
struct TensorImpl;
}

/// Receives the output gradient and the output values of the node being
/// differentiated. Implementations accumulate into their inputs' grads.
using BackwardFn =
    std::function<void(std::span<const double> out_grad, std::span<const double> out_data)>;

/// Dense row-major tensor of doubles, rank 1 to 4, with an optional gradient
/// buffer and a link to the operation that produced it.
///
/// Tensor is a cheap shared handle. Values are never modified after creation
/// except through mutable_data(), which is reserved for leaves (parameters
/// updated by the optimizer, perturbations in finite-difference checks).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// A leaf that records gradients.
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  const std::string& op_name() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Allocates a zero gradient buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, no graph history, no grad.
  Tensor detach() const;
  /// Deep copy of values as a fresh leaf (requires_grad preserved).
  Tensor clone() const;

  bool same_as(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;

  friend Tensor make_result(Shape, std::vector<double>, std::string, std::vector<Tensor>,
                            BackwardFn);
  friend void backward(const Tensor& loss);
};

/// Builds the output of a differentiable operation. When gradient recording is
/// enabled and any input requires grad, the result remembers its inputs and
/// the backward closure; otherwise it is a plain constant.
Tensor make_result(Shape shape, std::vector<double> data, std::string op,
                   std::vector<Tensor> inputs, BackwardFn fn);

/// Gradient buffer of `t` if it participates in differentiation, else empty.
std::span<double> grad_sink(const Tensor& t);

/// Reverse-mode sweep from a scalar loss. Intermediate gradients are reset at
/// the start of every call; leaf gradients accumulate across calls.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording for its lifetime (evaluation, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace vala
