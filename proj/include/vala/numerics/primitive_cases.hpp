#pragma once

#include <vector>

#include "vala/numerics/grad_check.hpp"

namespace vala {

/// One finite-difference case per differentiable primitive, at small shapes
/// that still exercise batching, strides, padding and broadcasting.
std::vector<OpCase> primitive_cases();

/// A sigmoid whose backward pass is off by 1%. Negative control for the
/// gradient checker; never used outside checks.
OpCase corrupted_case();

/// Rewrites every input as a shuffled grid with spacing `gap`, so max
/// reductions have no ties within +-h.
void spread_unique(std::vector<Tensor>& inputs, Rng& rng, double gap = 0.05);

/// Pushes values within `margin` of any kink point away from it.
void avoid_kinks(std::vector<Tensor>& inputs, std::span<const double> kinks, double margin);

}  // namespace vala
