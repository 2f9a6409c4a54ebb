#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vala/model/config.hpp"
#include "vala/model/model_grad_check.hpp"
#include "vala/numerics/grad_check.hpp"

namespace vala {

struct GradSuiteOptions {
  std::uint64_t first_seed = 0;
  std::size_t seeds = 1;
  GradCheckOptions check;
  bool include_model = true;
  ModelConfig model;  ///< desk configuration unless replaced
  /// Per-seed budget for the assembled model: three global directions and one
  /// direction in each of eight parameter tensors, rotating with the seed.
  ModelGradCheckOptions model_check{
      .batch = 3, .directions = 3, .directions_per_param = 1, .params_per_seed = 8};
  /// Adds a sigmoid with a 1% backward error; the suite must then fail.
  bool inject_fault = false;
};

struct GradSuiteReport {
  std::vector<GradCheckReport> ops;  ///< merged over seeds, one per op
  std::uint64_t first_seed = 0;
  std::size_t seeds = 0;
  double seconds = 0.0;

  bool passed() const;
  std::vector<const GradCheckReport*> failures() const;
  nlohmann::json to_json() const;
};

/// Every differentiable primitive, both losses and the assembled model, each
/// at seeds first_seed .. first_seed + seeds - 1.
GradSuiteReport run_grad_suite(const GradSuiteOptions& options);

}  // namespace vala
