#include "vala/data/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "vala/numerics/errors.hpp"

namespace vala {

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& is, const std::string& source) {
  std::string token;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) return token;
      continue;
    }
    token.push_back(static_cast<char>(ch));
    if (token.size() > 16) throw FormatError(source + ": oversized header field");
  }
  if (token.empty()) throw FormatError(source + ": truncated header");
  return token;
}

std::size_t header_number(std::istream& is, const std::string& source, const char* what) {
  const std::string token = header_token(is, source);
  if (token.empty() || !std::all_of(token.begin(), token.end(), ::isdigit)) {
    throw FormatError(source + ": invalid " + what + " '" + token + "'");
  }
  const unsigned long long v = std::stoull(token);
  if (v == 0 || v > 65535) throw FormatError(source + ": " + what + " out of range");
  return static_cast<std::size_t>(v);
}

void write_file(const std::string& path, const Image8& image, std::size_t channels) {
  if (image.channels != channels) {
    throw std::invalid_argument(path + ": expected a " + std::to_string(channels) +
                                "-channel image");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_pnm(os, image);
  if (!os) throw std::runtime_error("failed writing " + path);
}

Image8 read_file(const std::string& path, std::size_t channels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path);
  Image8 image = read_pnm(is, path);
  if (image.channels != channels) {
    throw FormatError(path + ": expected " + (channels == 3 ? "P6" : "P5") + " data");
  }
  return image;
}

}  // namespace

Tensor Image8::to_tensor() const {
  std::vector<double> v(channels * height * width);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        v[(c * height + y) * width + x] = at(y, x, c) / 255.0;
      }
  return Tensor({channels, height, width}, std::move(v));
}

Image8 Image8::from_tensor(const Tensor& chw) {
  if (chw.rank() != 3) throw ShapeError("Image8::from_tensor: expected C x H x W");
  Image8 img(chw.dim(0), chw.dim(1), chw.dim(2));
  const auto d = chw.data();
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const double v = std::clamp(d[(c * img.height + y) * img.width + x], 0.0, 1.0);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

void write_pnm(std::ostream& os, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_pnm: only 1- or 3-channel images");
  }
  os << (image.channels == 3 ? "P6" : "P5") << '\n'
     << image.width << ' ' << image.height << '\n'
     << 255 << '\n';
  os.write(reinterpret_cast<const char*>(image.pixels.data()),
           static_cast<std::streamsize>(image.pixels.size()));
}

Image8 read_pnm(std::istream& is, const std::string& source) {
  const std::string magic = header_token(is, source);
  std::size_t channels;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw FormatError(source + ": unsupported magic '" + magic + "' (expected P6 or P5)");
  const std::size_t width = header_number(is, source, "width");
  const std::size_t height = header_number(is, source, "height");
  const std::size_t maxval = header_number(is, source, "maxval");
  if (maxval != 255) throw FormatError(source + ": only maxval 255 is supported");
  Image8 image(channels, height, width);
  if (!is.read(reinterpret_cast<char*>(image.pixels.data()),
               static_cast<std::streamsize>(image.pixels.size()))) {
    throw FormatError(source + ": truncated pixel data");
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError(source + ": trailing bytes after pixel data");
  }
  return image;
}

void write_ppm(const std::string& path, const Image8& image) { write_file(path, image, 3); }
Image8 read_ppm(const std::string& path) { return read_file(path, 3); }
void write_pgm(const std::string& path, const Image8& image) { write_file(path, image, 1); }
Image8 read_pgm(const std::string& path) { return read_file(path, 1); }

}  // namespace vala
