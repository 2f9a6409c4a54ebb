#include "vala/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "vala/numerics/kink.hpp"
#include "vala/numerics/ops.hpp"

namespace vala {

namespace {

struct Evaluation {
  double value;
  std::uint64_t signature;
};

Evaluation evaluate(const LossFn& loss) {
  NoGradGuard no_grad;
  kink::Monitor monitor;
  const double value = loss().item();
  return {value, monitor.signature()};
}

void analytic_pass(const LossFn& loss, std::span<Tensor> leaves) {
  for (auto& leaf : leaves) leaf.zero_grad();
  backward(loss());
}

double grad_at(const Tensor& leaf, std::size_t i) {
  return leaf.has_grad() ? leaf.grad()[i] : 0.0;
}

}  // namespace

void GradCheckReport::merge(const GradCheckReport& other) {
  max_rel_error = std::max(max_rel_error, other.max_rel_error);
  checked += other.checked;
  skipped_kinks += other.skipped_kinks;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport check_gradients(const std::string& name, const LossFn& loss,
                                std::span<Tensor> leaves, const GradCheckOptions& options,
                                std::optional<std::size_t> per_leaf_limit, Rng* rng) {
  GradCheckReport report;
  report.op = name;
  report.tol = options.tol;
  analytic_pass(loss, leaves);
  const std::uint64_t base = evaluate(loss).signature;

  for (auto& leaf : leaves) {
    std::vector<std::size_t> coords(leaf.numel());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (per_leaf_limit && *per_leaf_limit < coords.size()) {
      if (!rng) throw std::invalid_argument("check_gradients: sampling needs an rng");
      rng->shuffle(std::span<std::size_t>(coords));
      coords.resize(*per_leaf_limit);
    }
    auto values = leaf.mutable_data();
    for (auto i : coords) {
      const double original = values[i];
      values[i] = original + options.h;
      const Evaluation plus = evaluate(loss);
      values[i] = original - options.h;
      const Evaluation minus = evaluate(loss);
      values[i] = original;
      if (plus.signature != base || minus.signature != base) {
        ++report.skipped_kinks;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.h);
      report.max_rel_error =
          std::max(report.max_rel_error, relative_error(grad_at(leaf, i), numeric));
      ++report.checked;
    }
  }
  return report;
}

GradCheckReport check_directional(const std::string& name, const LossFn& loss,
                                  std::span<Tensor> leaves, std::size_t directions, Rng& rng,
                                  const GradCheckOptions& options) {
  GradCheckReport report;
  report.op = name;
  report.tol = options.tol;
  analytic_pass(loss, leaves);
  const std::uint64_t base = evaluate(loss).signature;

  std::vector<std::vector<double>> originals;
  for (const auto& leaf : leaves) {
    originals.emplace_back(leaf.data().begin(), leaf.data().end());
  }
  for (std::size_t d = 0; d < directions; ++d) {
    std::vector<std::vector<double>> dir;
    double norm = 0.0;
    for (const auto& leaf : leaves) {
      std::vector<double> v(leaf.numel());
      for (double& x : v) {
        x = rng.normal();
        norm += x * x;
      }
      dir.push_back(std::move(v));
    }
    norm = std::sqrt(norm);
    double analytic = 0.0;
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      for (std::size_t i = 0; i < dir[l].size(); ++i) {
        dir[l][i] /= norm;
        analytic += grad_at(leaves[l], i) * dir[l][i];
      }
    }
    auto shift = [&](double step) {
      for (std::size_t l = 0; l < leaves.size(); ++l) {
        auto values = leaves[l].mutable_data();
        for (std::size_t i = 0; i < values.size(); ++i) {
          values[i] = originals[l][i] + step * dir[l][i];
        }
      }
    };
    shift(options.h);
    const Evaluation plus = evaluate(loss);
    shift(-options.h);
    const Evaluation minus = evaluate(loss);
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      std::copy(originals[l].begin(), originals[l].end(), leaves[l].mutable_data().begin());
    }
    if (plus.signature != base || minus.signature != base) {
      ++report.skipped_kinks;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * options.h);
    report.max_rel_error = std::max(report.max_rel_error, relative_error(analytic, numeric));
    ++report.checked;
  }
  return report;
}

GradCheckReport grad_check(const OpCase& op_case, std::uint64_t seed,
                           const GradCheckOptions& options) {
  Rng rng(seed);
  std::vector<Tensor> inputs;
  for (const auto& shape : op_case.input_shapes) {
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = rng.uniform(op_case.input_lo, op_case.input_hi);
    inputs.push_back(Tensor::parameter(shape, std::move(values)));
  }
  if (op_case.prepare) op_case.prepare(inputs, rng);

  Tensor probe;
  {
    NoGradGuard no_grad;
    probe = op_case.op(inputs);
  }
  std::vector<double> weights(probe.numel());
  for (double& w : weights) w = rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  const Tensor projection(probe.shape(), std::move(weights));

  LossFn loss = [&]() { return sum(mul(op_case.op(inputs), projection)); };
  return check_gradients(op_case.name, loss, inputs, options);
}

}  // namespace vala
