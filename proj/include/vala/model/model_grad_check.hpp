#pragma once

#include <cstddef>
#include <cstdint>

#include "vala/model/config.hpp"
#include "vala/numerics/grad_check.hpp"

namespace vala {

struct ModelGradCheckOptions {
  std::size_t batch = 3;
  /// Random unit directions spanning every parameter at once.
  std::size_t directions = 3;
  /// Random unit directions confined to one parameter tensor each. Better
  /// conditioned than single coordinates, whose gradients can sit near the
  /// round-off floor of a central difference.
  std::size_t directions_per_param = 0;
  /// Limits the per-tensor directions to a window of this many tensors that
  /// starts at (seed * params_per_seed) mod count, so consecutive seeds cover
  /// every tensor. 0 checks all of them.
  std::size_t params_per_seed = 0;
  /// Single coordinates sampled per parameter tensor.
  std::size_t coords_per_param = 0;
  GradCheckOptions check;
};

/// Builds `config` with randomly initialised final layers (seeded by `seed`),
/// feeds a random batch through the train-mode forward pass and compares the
/// gradient of a fixed random projection of the attribute logits, view
/// logits and fused maps against central differences.
GradCheckReport model_grad_check(ModelConfig config, std::uint64_t seed,
                                 const ModelGradCheckOptions& options = {});

}  // namespace vala
