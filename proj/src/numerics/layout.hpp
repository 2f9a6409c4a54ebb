#pragma once

#include <cstddef>
#include <string>

#include "vala/numerics/tensor.hpp"

namespace vala::detail {

/// View of a rank-3 (C x H x W) or rank-4 (N x C x H x W) tensor as a batch.
struct Nchw {
  std::size_t n = 1, c = 0, h = 0, w = 0;
  bool batched = false;

  std::size_t plane() const { return h * w; }
  std::size_t sample() const { return c * h * w; }

  Shape shape_with(std::size_t channels, std::size_t height, std::size_t width) const {
    if (batched) return {n, channels, height, width};
    return {channels, height, width};
  }
};

inline Nchw nchw(const Tensor& x, const char* op) {
  const auto& s = x.shape();
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(op) + ": expected C x H x W or N x C x H x W, got " +
                   shape_str(s));
}

}  // namespace vala::detail
