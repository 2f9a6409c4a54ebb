#include "vala/numerics/primitive_cases.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <numeric>

#include "vala/numerics/ops.hpp"

namespace vala {

void spread_unique(std::vector<Tensor>& inputs, Rng& rng, double gap) {
  for (auto& t : inputs) {
    auto values = t.mutable_data();
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    const double centre = static_cast<double>(values.size()) / 2.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = (static_cast<double>(order[i]) - centre) * gap;
    }
  }
}

void avoid_kinks(std::vector<Tensor>& inputs, std::span<const double> kinks, double margin) {
  for (auto& t : inputs) {
    for (double& v : t.mutable_data()) {
      for (double k : kinks) {
        if (std::abs(v - k) < margin) v = v >= k ? k + margin : k - margin;
      }
    }
  }
}

namespace {

BatchNormStats& shared_stats(std::size_t channels) {
  // Train-mode outputs do not depend on running statistics, and eval-mode
  // cases reset them before use, so one buffer per width is enough.
  thread_local std::array<std::unique_ptr<BatchNormStats>, 16> pool;
  auto& slot = pool.at(channels);
  if (!slot) slot = std::make_unique<BatchNormStats>(channels);
  return *slot;
}

}  // namespace

std::vector<OpCase> primitive_cases() {
  std::vector<OpCase> cases;
  const std::array<double, 1> relu_kink{0.0};
  const std::array<double, 2> hswish_kinks{-3.0, 3.0};

  cases.push_back({"conv2d_3x3_pad1",
                   [](std::span<const Tensor> in) { return conv2d(in[0], in[1], in[2], 1, 1); },
                   {{2, 3, 5, 4}, {4, 3, 3, 3}, {4}}});
  cases.push_back({"conv2d_3x3_stride2",
                   [](std::span<const Tensor> in) { return conv2d(in[0], in[1], in[2], 2, 1); },
                   {{1, 2, 6, 5}, {3, 2, 3, 3}, {3}}});
  cases.push_back({"conv2d_1x1",
                   [](std::span<const Tensor> in) { return conv2d(in[0], in[1], in[2], 1, 0); },
                   {{2, 4, 3, 3}, {5, 4, 1, 1}, {5}}});
  cases.push_back({"linear",
                   [](std::span<const Tensor> in) { return linear(in[0], in[1], in[2]); },
                   {{3, 5}, {4, 5}, {4}}});
  cases.push_back(
      {"directional_pool_width_max",
       [](std::span<const Tensor> in) {
         return directional_pool(in[0], PoolAxis::width, PoolMode::max);
       },
       {{2, 3, 4, 5}},
       [](std::vector<Tensor>& in, Rng& rng) { spread_unique(in, rng); }});
  cases.push_back({"directional_pool_height_avg",
                   [](std::span<const Tensor> in) {
                     return directional_pool(in[0], PoolAxis::height, PoolMode::avg);
                   },
                   {{2, 3, 4, 5}}});
  cases.push_back({"global_avg_pool",
                   [](std::span<const Tensor> in) { return global_avg_pool(in[0]); },
                   {{2, 3, 4, 3}}});
  cases.push_back({"max_pool2d",
                   [](std::span<const Tensor> in) { return max_pool2d(in[0], 3, 1, 1); },
                   {{2, 2, 4, 3}},
                   [](std::vector<Tensor>& in, Rng& rng) { spread_unique(in, rng); }});
  cases.push_back({"sigmoid", [](std::span<const Tensor> in) { return sigmoid(in[0]); },
                   {{3, 4}}, {}, -4.0, 4.0});
  cases.push_back({"softmax", [](std::span<const Tensor> in) { return softmax(in[0]); },
                   {{3, 4}}, {}, -3.0, 3.0});
  cases.push_back({"h_swish", [](std::span<const Tensor> in) { return h_swish(in[0]); },
                   {{4, 5}},
                   [hswish_kinks](std::vector<Tensor>& in, Rng&) {
                     avoid_kinks(in, hswish_kinks, 1e-2);
                   },
                   -5.0, 5.0});
  cases.push_back({"relu", [](std::span<const Tensor> in) { return relu(in[0]); },
                   {{4, 5}},
                   [relu_kink](std::vector<Tensor>& in, Rng&) { avoid_kinks(in, relu_kink, 1e-2); }});
  cases.push_back({"batch_norm_train",
                   [](std::span<const Tensor> in) {
                     return batch_norm(in[0], in[1], in[2], shared_stats(3), BnMode::train);
                   },
                   {{4, 3, 2, 2}, {3}, {3}}});
  cases.push_back({"batch_norm_eval",
                   [](std::span<const Tensor> in) {
                     auto& stats = shared_stats(5);
                     stats.running_mean.assign(5, 0.1);
                     stats.running_var.assign(5, 0.8);
                     return batch_norm(in[0], in[1], in[2], stats, BnMode::eval);
                   },
                   {{3, 5}, {5}, {5}}});
  cases.push_back({"join_directional",
                   [](std::span<const Tensor> in) { return join_directional(in[0], in[1]); },
                   {{2, 3, 4, 1}, {2, 3, 1, 5}}});
  cases.push_back({"split_directional",
                   [](std::span<const Tensor> in) {
                     auto [a, b] = split_directional(in[0], 4, 5);
                     return mul(a, b);
                   },
                   {{2, 3, 9, 1}}});
  cases.push_back({"mul_broadcast",
                   [](std::span<const Tensor> in) { return mul(in[0], in[1]); },
                   {{2, 3, 4, 4}, {2, 3, 4, 1}}});
  cases.push_back({"add_broadcast",
                   [](std::span<const Tensor> in) { return add(in[0], in[1]); },
                   {{2, 3, 1, 4}, {3, 4, 4}}});
  cases.push_back({"repeat_interleave",
                   [](std::span<const Tensor> in) { return repeat_interleave(in[0], 1, 3); },
                   {{2, 4}}});
  cases.push_back({"slice_concat",
                   [](std::span<const Tensor> in) {
                     return concat(slice(in[0], 1, 1, 2), in[1], 1);
                   },
                   {{2, 4, 3}, {2, 3, 3}}});
  cases.push_back({"reshape_transpose",
                   [](std::span<const Tensor> in) {
                     return transpose_last2(reshape(in[0], {2, 3, 4}));
                   },
                   {{6, 4}}});
  cases.push_back({"scale_mean",
                   [](std::span<const Tensor> in) { return add(scale(in[0], -2.5), mean(in[0])); },
                   {{3, 3}}});
  return cases;
}

OpCase corrupted_case() {
  return {"sigmoid_corrupted",
          [](std::span<const Tensor> in) {
            const Tensor clean = sigmoid(in[0]).detach();
            std::vector<double> out(clean.data().begin(), clean.data().end());
            Tensor x = in[0];
            return make_result(x.shape(), std::move(out), "sigmoid_corrupted", {x},
                               [x](std::span<const double> dy, std::span<const double> y) {
                                 auto dx = grad_sink(x);
                                 for (std::size_t i = 0; i < dx.size(); ++i) {
                                   dx[i] += 1.01 * dy[i] * y[i] * (1.0 - y[i]);
                                 }
                               });
          },
          {{3, 4}}};
}

}  // namespace vala
