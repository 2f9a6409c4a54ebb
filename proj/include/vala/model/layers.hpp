#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "vala/numerics/ops.hpp"
#include "vala/numerics/rng.hpp"
#include "vala/numerics/tensor.hpp"

namespace vala {

/// The view branch trains at the shallow learning rate, everything else at
/// the deep one.
enum class ParamGroup { shallow, deep };

struct NamedParameter {
  std::string name;
  Tensor value;
  ParamGroup group = ParamGroup::deep;
};

/// Non-trainable state saved with the parameters (batch-norm running stats).
struct NamedBuffer {
  std::string name;
  std::shared_ptr<BatchNormStats> owner;
  std::vector<double>* values = nullptr;
};

enum class Init { kaiming, fan_in, zero };

/// Creates parameters in a fixed order from one seeded stream.
class ParamRegistry {
 public:
  explicit ParamRegistry(std::uint64_t seed) : rng_(seed) {}

  /// `fan_in` scales the draw: kaiming uses sqrt(2 / fan_in), fan_in uses
  /// sqrt(1 / fan_in).
  Tensor make(const std::string& name, Shape shape, Init init, std::size_t fan_in,
              ParamGroup group);
  Tensor constant(const std::string& name, Shape shape, double value, ParamGroup group);
  std::shared_ptr<BatchNormStats> stats(const std::string& name, std::size_t channels);

  std::vector<NamedParameter>& parameters() { return params_; }
  std::vector<NamedBuffer>& buffers() { return buffers_; }

 private:
  Rng rng_;
  std::vector<NamedParameter> params_;
  std::vector<NamedBuffer> buffers_;
};

/// Layers feeding a train-mode batch norm skip the bias, which the
/// normalisation would cancel.
struct Conv {
  Tensor weight, bias;
  std::size_t stride = 1, padding = 0;

  static Conv create(ParamRegistry& reg, const std::string& name, std::size_t in,
                     std::size_t out, std::size_t kernel, std::size_t stride, Init init,
                     ParamGroup group, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
};

struct Linear {
  Tensor weight, bias;

  static Linear create(ParamRegistry& reg, const std::string& name, std::size_t in,
                       std::size_t out, Init init, ParamGroup group, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct BatchNorm {
  Tensor gamma, beta;
  std::shared_ptr<BatchNormStats> stats;

  static BatchNorm create(ParamRegistry& reg, const std::string& name, std::size_t channels,
                          ParamGroup group);
  Tensor operator()(const Tensor& x, BnMode mode) const {
    return batch_norm(x, gamma, beta, *stats, mode);
  }
};

}  // namespace vala
