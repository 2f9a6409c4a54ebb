#include <cmath>

#include "vala/numerics/ops.hpp"

namespace vala {

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  BnMode mode, double eps, double momentum) {
  if (x.rank() < 2) {
    throw ShapeError("batch_norm: input needs a batch axis and a channel axis, got " +
                     shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t inner = x.numel() / (batch * channels);
  if (gamma.numel() != channels || beta.numel() != channels ||
      stats.running_mean.size() != channels || stats.running_var.size() != channels) {
    throw ShapeError("batch_norm: affine/statistics size does not match " +
                     std::to_string(channels) + " channels of " + shape_str(x.shape()));
  }
  const std::size_t count = batch * inner;
  const double* src = x.data().data();
  auto at = [&](std::size_t b, std::size_t c, std::size_t i) {
    return (b * channels + c) * inner + i;
  };

  std::vector<double> mean(channels), inv_std(channels);
  if (mode == BnMode::train) {
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < inner; ++i) acc += src[at(b, c, i)];
      }
      const double mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < inner; ++i) {
          const double dv = src[at(b, c, i)] - mu;
          sq += dv * dv;
        }
      }
      const double var = sq / static_cast<double>(count);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      stats.running_mean[c] = (1.0 - momentum) * stats.running_mean[c] + momentum * mu;
      stats.running_var[c] = (1.0 - momentum) * stats.running_var[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + eps);
    }
  }

  std::vector<double> xhat(x.numel());
  std::vector<double> out(x.numel());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double g = gamma.data()[c], be = beta.data()[c];
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = at(b, c, i);
        xhat[k] = (src[k] - mean[c]) * inv_std[c];
        out[k] = g * xhat[k] + be;
      }
    }
  }

  auto fn = [x, gamma, beta, mode, xhat = std::move(xhat), inv_std, batch, channels, inner,
             count](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    auto dgamma = grad_sink(gamma);
    auto dbeta = grad_sink(beta);
    auto at = [&](std::size_t b, std::size_t c, std::size_t i) {
      return (b * channels + c) * inner + i;
    };
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = at(b, c, i);
          sum_g += dy[k];
          sum_gx += dy[k] * xhat[k];
        }
      }
      if (!dgamma.empty()) dgamma[c] += sum_gx;
      if (!dbeta.empty()) dbeta[c] += sum_g;
      if (dx.empty()) continue;
      const double scale = gamma.data()[c] * inv_std[c];
      if (mode == BnMode::eval) {
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t i = 0; i < inner; ++i) dx[at(b, c, i)] += scale * dy[at(b, c, i)];
        }
        continue;
      }
      const double mean_g = sum_g / static_cast<double>(count);
      const double mean_gx = sum_gx / static_cast<double>(count);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = at(b, c, i);
          dx[k] += scale * (dy[k] - mean_g - xhat[k] * mean_gx);
        }
      }
    }
  };
  return make_result(x.shape(), std::move(out), "batch_norm", {x, gamma, beta}, std::move(fn));
}

}  // namespace vala
