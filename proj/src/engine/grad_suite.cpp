#include "vala/engine/grad_suite.hpp"

#include <chrono>
#include <map>

#include "vala/metrics/losses.hpp"
#include "vala/numerics/primitive_cases.hpp"

namespace vala {

namespace {

Tensor random_leaf(Shape shape, Rng& rng, double spread) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-spread, spread);
  return Tensor::parameter(std::move(shape), std::move(v));
}

GradCheckReport check_view_loss(std::uint64_t seed, int num_views, const GradCheckOptions& opts) {
  Rng rng(seed);
  std::vector<Tensor> leaves{random_leaf({6, 4}, rng, 3.0)};
  std::vector<int> labels(6);
  for (int& l : labels) l = static_cast<int>(rng.below(4));
  // Keep at least one sample that survives the three-view filter.
  labels[0] = static_cast<int>(rng.below(3));
  LossFn loss = [&]() { return view_loss(leaves[0], labels, num_views); };
  return check_gradients("view_loss_" + std::to_string(num_views) + "views", loss, leaves, opts);
}

GradCheckReport check_attr_loss(std::uint64_t seed, const GradCheckOptions& opts) {
  Rng rng(seed);
  std::vector<Tensor> leaves{random_leaf({5, 4}, rng, 3.0)};
  BitMatrix labels(5, 4);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 4; ++j) labels.set(i, j, rng.bernoulli(0.5));
  }
  std::vector<double> rates(4);
  for (double& r : rates) r = rng.uniform();
  LossFn loss = [&]() { return attr_loss(leaves[0], labels, rates); };
  return check_gradients("attr_loss", loss, leaves, opts);
}

}  // namespace

bool GradSuiteReport::passed() const { return failures().empty(); }

std::vector<const GradCheckReport*> GradSuiteReport::failures() const {
  std::vector<const GradCheckReport*> out;
  for (const auto& r : ops) {
    if (!r.passed()) out.push_back(&r);
  }
  return out;
}

nlohmann::json GradSuiteReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : ops) {
    rows.push_back({{"op", r.op},
                    {"max_rel_error", r.max_rel_error},
                    {"checked", r.checked},
                    {"skipped_kinks", r.skipped_kinks},
                    {"passed", r.passed()}});
  }
  const double tol = ops.empty() ? 0.0 : ops.front().tol;
  return {{"passed", passed()}, {"tol", tol},         {"first_seed", first_seed},
          {"seeds", seeds},     {"seconds", seconds}, {"ops", rows}};
}

GradSuiteReport run_grad_suite(const GradSuiteOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<OpCase> cases = primitive_cases();
  if (options.inject_fault) cases.push_back(corrupted_case());
  ModelGradCheckOptions model_opts = options.model_check;
  model_opts.check = options.check;

  std::vector<std::string> order;
  std::map<std::string, GradCheckReport> merged;
  auto add = [&](const GradCheckReport& r) {
    auto [it, fresh] = merged.try_emplace(r.op, r);
    if (fresh) order.push_back(r.op);
    else it->second.merge(r);
  };
  for (std::size_t k = 0; k < options.seeds; ++k) {
    const std::uint64_t seed = options.first_seed + k;
    for (const auto& c : cases) add(grad_check(c, seed, options.check));
    add(check_view_loss(seed, 4, options.check));
    add(check_view_loss(seed, 3, options.check));
    add(check_attr_loss(seed, options.check));
    if (options.include_model) {
      add(model_grad_check(options.model, seed, model_opts));
    }
  }

  GradSuiteReport report;
  report.first_seed = options.first_seed;
  report.seeds = options.seeds;
  for (const auto& name : order) report.ops.push_back(merged.at(name));
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace vala
