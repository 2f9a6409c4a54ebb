#include <algorithm>
#include <cmath>

#include "vala/numerics/kink.hpp"
#include "vala/numerics/ops.hpp"

namespace vala {

namespace {

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  std::transform(x.data().begin(), x.data().end(), out.begin(), stable_sigmoid);
  auto fn = [x](std::span<const double> dy, std::span<const double> y) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
  };
  return make_result(x.shape(), std::move(out), "sigmoid", {x}, std::move(fn));
}

Tensor softmax(const Tensor& x) {
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  std::vector<double> out(x.numel());
  const double* src = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = src + r * len;
    double* dst = out.data() + r * len;
    const double top = *std::max_element(row, row + len);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      dst[i] = std::exp(row[i] - top);
      total += dst[i];
    }
    for (std::size_t i = 0; i < len; ++i) dst[i] /= total;
  }
  auto fn = [x, rows, len](std::span<const double> dy, std::span<const double> y) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t i = 0; i < len; ++i) dot += dy[r * len + i] * y[r * len + i];
      for (std::size_t i = 0; i < len; ++i) {
        dx[r * len + i] += y[r * len + i] * (dy[r * len + i] - dot);
      }
    }
  };
  return make_result(x.shape(), std::move(out), "softmax", {x}, std::move(fn));
}

Tensor h_swish(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = in[i];
    out[i] = v * std::min(std::max(v + 3.0, 0.0), 6.0) / 6.0;
  }
  if (kink::active()) {
    for (double v : in) kink::record(kink::Site::h_swish, v <= -3.0 ? 0 : (v >= 3.0 ? 2 : 1));
  }
  auto fn = [x](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    const auto in = x.data();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const double v = in[i];
      const double slope = v <= -3.0 ? 0.0 : (v >= 3.0 ? 1.0 : (2.0 * v + 3.0) / 6.0);
      dx[i] += dy[i] * slope;
    }
  };
  return make_result(x.shape(), std::move(out), "h_swish", {x}, std::move(fn));
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
  if (kink::active()) {
    for (double v : in) kink::record(kink::Site::relu, v > 0.0 ? 1 : 0);
  }
  auto fn = [x](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    const auto in = x.data();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (in[i] > 0.0) dx[i] += dy[i];
    }
  };
  return make_result(x.shape(), std::move(out), "relu", {x}, std::move(fn));
}

Tensor activation(const Tensor& x, Activation kind) {
  switch (kind) {
    case Activation::sigmoid:
      return sigmoid(x);
    case Activation::softmax:
      return softmax(x);
    case Activation::h_swish:
      return h_swish(x);
    case Activation::relu:
      return relu(x);
  }
  throw std::invalid_argument("unknown activation");
}

}  // namespace vala
