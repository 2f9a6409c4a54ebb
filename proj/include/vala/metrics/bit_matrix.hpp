#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vala {

/// Row-major N x K matrix of 0/1 labels or predictions.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}
  BitMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits)
      : rows_(rows), cols_(cols), bits_(std::move(bits)) {
    if (bits_.size() != rows * cols) {
      throw std::invalid_argument("BitMatrix: " + std::to_string(bits_.size()) +
                                  " bits for a " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + " matrix");
    }
    for (auto b : bits_) {
      if (b > 1) throw std::invalid_argument("BitMatrix: entries must be 0 or 1");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool at(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const BitMatrix&) const = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace vala
