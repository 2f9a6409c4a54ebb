#pragma once

#include <cstdint>

namespace vala::kink {

// Non-smooth primitives (relu, h_swish, max pooling, clamped logs) report which
// branch each element took while a Monitor is alive. Two evaluations with the
// same signature lie on the same smooth piece of the function.

enum class Site : std::uint64_t {
  relu = 1,
  h_swish = 2,
  directional_max = 3,
  max_pool = 4,
  log_clamp = 5,
};

bool active();
void record(Site site, std::uint64_t branch);

class Monitor {
 public:
  Monitor();
  ~Monitor();
  Monitor(const Monitor&) = delete;
  Monitor& operator=(const Monitor&) = delete;

  std::uint64_t signature() const;
  void reset();

 private:
  bool previous_active_;
  std::uint64_t previous_hash_;
};

}  // namespace vala::kink
