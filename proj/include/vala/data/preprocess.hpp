#pragma once

#include <cstddef>

#include "vala/numerics/rng.hpp"
#include "vala/numerics/tensor.hpp"

namespace vala {

inline constexpr double kNormMean = 0.5;
inline constexpr double kNormStd = 0.25;

/// Zero-pads by `pad` on every side and cuts a random H x W window. Always
/// consumes exactly two draws from `rng` (row offset, then column offset).
Tensor random_crop(const Tensor& image, std::size_t pad, Rng& rng);

/// Bilinear resize with half-pixel centres and edge clamping.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

/// resize_bilinear, then (x - 0.5) / 0.25 on every channel.
Tensor normalize_resize(const Tensor& image, std::size_t height, std::size_t width);

}  // namespace vala
