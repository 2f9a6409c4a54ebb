#include "vala/data/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace vala {

namespace {

void check_chw(const Tensor& image, const char* op) {
  if (image.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected C x H x W, got " + shape_str(image.shape()));
  }
}

std::size_t offset_draw(Rng& rng, std::size_t choices) {
  const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(choices));
  return std::min(k, choices - 1);
}

}  // namespace

Tensor random_crop(const Tensor& image, std::size_t pad, Rng& rng) {
  check_chw(image, "random_crop");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::size_t oy = offset_draw(rng, 2 * pad + 1);
  const std::size_t ox = offset_draw(rng, 2 * pad + 1);
  const auto src = image.data();
  std::vector<double> out(src.size(), 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y) {
      const long sy = static_cast<long>(y + oy) - static_cast<long>(pad);
      if (sy < 0 || sy >= static_cast<long>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const long sx = static_cast<long>(x + ox) - static_cast<long>(pad);
        if (sx < 0 || sx >= static_cast<long>(w)) continue;
        out[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
      }
    }
  return Tensor(image.shape(), std::move(out));
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  check_chw(image, "resize_bilinear");
  if (height == 0 || width == 0) throw ShapeError("resize_bilinear: zero-size target");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image.detach();

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      const double s = std::clamp((static_cast<double>(i) + 0.5) * scale - 0.5, 0.0,
                                  static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(s));
      t[i] = {lo, std::min(lo + 1, in - 1), s - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(h, height), tx = taps(w, width);
  const auto src = image.data();
  std::vector<double> out(c * height * width);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = src.data() + ch * h * w;
    for (std::size_t y = 0; y < height; ++y) {
      const auto& a = ty[y];
      for (std::size_t x = 0; x < width; ++x) {
        const auto& b = tx[x];
        const double top = plane[a.lo * w + b.lo] * (1 - b.frac) + plane[a.lo * w + b.hi] * b.frac;
        const double bot = plane[a.hi * w + b.lo] * (1 - b.frac) + plane[a.hi * w + b.hi] * b.frac;
        out[(ch * height + y) * width + x] = top * (1 - a.frac) + bot * a.frac;
      }
    }
  }
  return Tensor({c, height, width}, std::move(out));
}

Tensor normalize_resize(const Tensor& image, std::size_t height, std::size_t width) {
  Tensor resized = resize_bilinear(image, height, width);
  for (double& v : resized.mutable_data()) v = (v - kNormMean) / kNormStd;
  return resized;
}

}  // namespace vala
