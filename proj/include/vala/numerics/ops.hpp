#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "vala/numerics/tensor.hpp"

namespace vala {

enum class Activation { sigmoid, softmax, h_swish, relu };

/// Axis that directional_pool collapses to extent 1.
enum class PoolAxis { width, height };
enum class PoolMode { max, avg };
enum class BnMode { train, eval };
enum class BinaryOp { mul, add };

// Spatial operators accept a single map (C x H x W) or a batch (N x C x H x W)
// and preserve that rank.

/// Cross-correlation plus bias. `bias` may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

/// out = W x + b for x of shape (n) or (N x n).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Reduces one spatial axis: (width, max) gives C x H x 1, (height, avg)
/// gives C x 1 x W. Max ties resolve to the first index in scan order.
Tensor directional_pool(const Tensor& x, PoolAxis axis, PoolMode mode);

Tensor global_avg_pool(const Tensor& x);

/// Max pooling with implicit -inf padding.
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Softmax runs along the last axis.
Tensor activation(const Tensor& x, Activation kind);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x);
Tensor h_swish(const Tensor& x);
Tensor relu(const Tensor& x);

struct BatchNormStats {
  explicit BatchNormStats(std::size_t channels)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Channel axis is 1; statistics pool over every other axis. Train mode
/// normalizes with batch statistics and moves the running statistics by
/// `momentum` (the running variance uses the unbiased estimate).
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  BnMode mode, double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

/// Joins a height-pooled map (.. x c x h x 1) with a width-pooled map
/// (.. x c x 1 x w) into .. x c x (h+w) x 1; the width branch is transposed
/// to a column first.
Tensor join_directional(const Tensor& height_branch, const Tensor& width_branch);
/// Exact inverse of join_directional.
std::pair<Tensor, Tensor> split_directional(const Tensor& joint, std::size_t h, std::size_t w);

/// Broadcasting follows right-aligned size-1 stretching.
Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Full reductions to shape {1}.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor transpose_last2(const Tensor& x);
/// Repeats each entry along `axis` `repeats` times contiguously:
/// [a, b] -> [a, a, b, b].
Tensor repeat_interleave(const Tensor& x, std::size_t axis, std::size_t repeats);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

}  // namespace vala
