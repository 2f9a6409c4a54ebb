#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vala/numerics/rng.hpp"
#include "vala/numerics/tensor.hpp"

namespace vala {

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
};

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +-h evaluations landed on different smooth pieces.
  std::size_t skipped_kinks = 0;
  double tol = 1e-4;

  bool passed() const { return checked > 0 && max_rel_error < tol; }
  void merge(const GradCheckReport& other);
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

using LossFn = std::function<Tensor()>;

/// Compares d loss / d leaf against central differences, one coordinate at a
/// time. With `per_leaf_limit` set, that many coordinates are drawn per leaf
/// from `rng`; otherwise every coordinate is checked.
GradCheckReport check_gradients(const std::string& name, const LossFn& loss,
                                std::span<Tensor> leaves, const GradCheckOptions& options = {},
                                std::optional<std::size_t> per_leaf_limit = std::nullopt,
                                Rng* rng = nullptr);

/// Compares the directional derivative along random unit directions spanning
/// every leaf at once: grad . v against (L(x + h v) - L(x - h v)) / 2h.
GradCheckReport check_directional(const std::string& name, const LossFn& loss,
                                  std::span<Tensor> leaves, std::size_t directions, Rng& rng,
                                  const GradCheckOptions& options = {});

using OpFn = std::function<Tensor(std::span<const Tensor>)>;

struct OpCase {
  std::string name;
  OpFn op;
  std::vector<Shape> input_shapes;
  /// Optional: moves freshly drawn inputs away from kinks and ties.
  std::function<void(std::vector<Tensor>&, Rng&)> prepare;
  double input_lo = -1.0;
  double input_hi = 1.0;
};

/// Draws inputs for `op_case` from `seed`, reduces the output to a scalar
/// with fixed random projection weights and checks every input coordinate.
GradCheckReport grad_check(const OpCase& op_case, std::uint64_t seed,
                           const GradCheckOptions& options = {});

}  // namespace vala
