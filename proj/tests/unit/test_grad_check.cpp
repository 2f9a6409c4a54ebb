#include <cmath>

#include "doctest.h"
#include "vala/numerics/grad_check.hpp"
#include "vala/numerics/ops.hpp"
#include "vala/numerics/primitive_cases.hpp"

using namespace vala;

TEST_CASE("relative error uses the 1e-8 floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
  CHECK(relative_error(0.0, 1e-12) == doctest::Approx(1e-4));
}

TEST_CASE("identity op has exactly zero error") {
  Tensor x = Tensor::parameter({4}, {0, 0, 0, 0});
  std::vector<Tensor> leaves{x};
  auto report = check_gradients("identity", [&] { return sum(x); }, leaves);
  CHECK(report.checked == 4);
  CHECK(report.max_rel_error == 0.0);
}

TEST_CASE("sigmoid chain on a random 4-vector") {
  OpCase chain{"sigmoid_chain",
               [](std::span<const Tensor> in) { return sigmoid(scale(sigmoid(in[0]), 3.0)); },
               {{4}}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CHECK(grad_check(chain, seed).max_rel_error < 1e-6);
  }
}

TEST_CASE("directional max with unique values") {
  OpCase pool{"dir_max",
              [](std::span<const Tensor> in) {
                return directional_pool(in[0], PoolAxis::width, PoolMode::max);
              },
              {{3, 4, 5}},
              [](std::vector<Tensor>& in, Rng& rng) { spread_unique(in, rng); }};
  auto report = grad_check(pool, 1);
  CHECK(report.max_rel_error < 1e-6);
  CHECK(report.skipped_kinks == 0);
}

TEST_CASE("every primitive matches central differences") {
  for (const auto& c : primitive_cases()) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto report = grad_check(c, seed);
      INFO(c.name, " seed ", seed, " err ", report.max_rel_error);
      CHECK(report.passed());
    }
  }
}

TEST_CASE("kink crossings are detected and skipped") {
  // x = 1e-6 sits within h of the relu kink.
  Tensor x = Tensor::parameter({2}, {1e-6, 0.5});
  std::vector<Tensor> leaves{x};
  auto report = check_gradients("relu_at_kink", [&] { return sum(relu(x)); }, leaves);
  CHECK(report.skipped_kinks == 1);
  CHECK(report.checked == 1);
  CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("directional derivative check") {
  Rng rng(3);
  Tensor w = Tensor::parameter({3, 2, 3, 3}, std::vector<double>(54));
  Tensor x = Tensor::parameter({2, 2, 5, 5}, std::vector<double>(100));
  for (double& v : w.mutable_data()) v = rng.normal();
  for (double& v : x.mutable_data()) v = rng.normal();
  std::vector<Tensor> leaves{w, x};
  auto report = check_directional(
      "conv_sigmoid", [&] { return mean(sigmoid(conv2d(x, w, Tensor(), 1, 1))); }, leaves, 5, rng);
  CHECK(report.checked == 5);
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("corrupted backward is caught") {
  auto report = grad_check(corrupted_case(), 0);
  CHECK_FALSE(report.passed());
  CHECK(report.max_rel_error > 5e-3);
}
