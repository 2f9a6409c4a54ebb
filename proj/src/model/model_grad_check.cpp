#include "vala/model/model_grad_check.hpp"

#include <algorithm>

#include "vala/model/vala_model.hpp"
#include "vala/numerics/ops.hpp"
#include "vala/numerics/rng.hpp"

namespace vala {

namespace {

Tensor random_like(const Tensor& t, Rng& rng) {
  std::vector<double> v(t.numel());
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(t.shape(), std::move(v));
}

}  // namespace

GradCheckReport model_grad_check(ModelConfig config, std::uint64_t seed,
                                 const ModelGradCheckOptions& options) {
  config.zero_init_final = false;
  config.init_seed = seed;
  VALAModel model(config);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);

  const auto& bb = config.backbone;
  std::vector<double> pixels(options.batch * bb.in_channels * bb.height * bb.width);
  for (double& p : pixels) p = rng.uniform(-2.0, 2.0);
  const Tensor images({options.batch, bb.in_channels, bb.height, bb.width}, std::move(pixels));

  ForwardOutput probe;
  {
    NoGradGuard no_grad;
    probe = model.forward(images, BnMode::train);
  }
  const Tensor attr_proj = random_like(probe.attr_logits, rng);
  const Tensor view_proj = probe.view.logits.defined() ? random_like(probe.view.logits, rng) : Tensor();
  const Tensor fused_proj = probe.fused.defined() ? random_like(probe.fused, rng) : Tensor();

  LossFn loss = [&]() {
    const ForwardOutput out = model.forward(images, BnMode::train);
    Tensor total = sum(mul(out.attr_logits, attr_proj));
    if (view_proj.defined()) total = add(total, sum(mul(out.view.logits, view_proj)));
    if (fused_proj.defined()) total = add(total, sum(mul(out.fused, fused_proj)));
    return total;
  };

  std::vector<Tensor> leaves;
  for (const auto& p : model.parameters()) leaves.push_back(p.value);
  const std::string name = "model[" + variant_label(config.flags) + "]";
  GradCheckReport report = check_directional(name, loss, leaves, options.directions, rng, options.check);
  const std::size_t window = options.params_per_seed == 0
                                 ? leaves.size()
                                 : std::min(options.params_per_seed, leaves.size());
  const std::size_t first = (seed * window) % leaves.size();
  for (std::size_t w = 0; options.directions_per_param > 0 && w < window; ++w) {
    const std::size_t i = (first + w) % leaves.size();
    report.merge(check_directional(name, loss, std::span<Tensor>(&leaves[i], 1),
                                   options.directions_per_param, rng, options.check));
  }
  if (options.coords_per_param > 0) {
    report.merge(check_gradients(name, loss, leaves, options.check, options.coords_per_param, &rng));
  }
  return report;
}

}  // namespace vala
