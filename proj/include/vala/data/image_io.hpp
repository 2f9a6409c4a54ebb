#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vala/numerics/tensor.hpp"

namespace vala {

/// 8-bit image with interleaved (H x W x C) samples, as stored in PPM/PGM.
struct Image8 {
  std::size_t channels = 3, height = 0, width = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::size_t channels, std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : channels(channels), height(height), width(width),
        pixels(channels * height * width, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }

  /// C x H x W with values v / 255.
  Tensor to_tensor() const;
  /// Clamps to [0, 1] and rounds to the nearest of 256 levels.
  static Image8 from_tensor(const Tensor& chw);

  bool operator==(const Image8&) const = default;
};

/// Binary PPM (P6, 3 channels) and PGM (P5, 1 channel), maxval 255. Headers
/// may contain comments. Malformed input throws FormatError.
void write_pnm(std::ostream& os, const Image8& image);
Image8 read_pnm(std::istream& is, const std::string& source = "<stream>");

void write_ppm(const std::string& path, const Image8& image);
Image8 read_ppm(const std::string& path);
void write_pgm(const std::string& path, const Image8& image);
Image8 read_pgm(const std::string& path);

}  // namespace vala
