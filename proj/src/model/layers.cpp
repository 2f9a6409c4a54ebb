#include "vala/model/layers.hpp"

#include <cmath>

namespace vala {

Tensor ParamRegistry::make(const std::string& name, Shape shape, Init init, std::size_t fan_in,
                           ParamGroup group) {
  std::vector<double> values(shape_numel(shape), 0.0);
  if (init != Init::zero) {
    const double gain = init == Init::kaiming ? 2.0 : 1.0;
    const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
    for (double& v : values) v = rng_.normal(0.0, stddev);
  }
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  params_.push_back({name, t, group});
  return t;
}

Tensor ParamRegistry::constant(const std::string& name, Shape shape, double value,
                               ParamGroup group) {
  std::vector<double> values(shape_numel(shape), value);
  Tensor t = Tensor::parameter(std::move(shape), std::move(values));
  params_.push_back({name, t, group});
  return t;
}

std::shared_ptr<BatchNormStats> ParamRegistry::stats(const std::string& name,
                                                     std::size_t channels) {
  auto s = std::make_shared<BatchNormStats>(channels);
  buffers_.push_back({name + ".running_mean", s, &s->running_mean});
  buffers_.push_back({name + ".running_var", s, &s->running_var});
  return s;
}

Conv Conv::create(ParamRegistry& reg, const std::string& name, std::size_t in, std::size_t out,
                  std::size_t kernel, std::size_t stride, Init init, ParamGroup group,
                  bool with_bias) {
  Conv c;
  const std::size_t fan_in = in * kernel * kernel;
  c.weight = reg.make(name + ".weight", {out, in, kernel, kernel}, init, fan_in, group);
  if (with_bias) c.bias = reg.constant(name + ".bias", {out}, 0.0, group);
  c.stride = stride;
  c.padding = kernel / 2;
  return c;
}

Linear Linear::create(ParamRegistry& reg, const std::string& name, std::size_t in,
                      std::size_t out, Init init, ParamGroup group, bool with_bias) {
  Linear l;
  l.weight = reg.make(name + ".weight", {out, in}, init, in, group);
  if (with_bias) l.bias = reg.constant(name + ".bias", {out}, 0.0, group);
  return l;
}

BatchNorm BatchNorm::create(ParamRegistry& reg, const std::string& name, std::size_t channels,
                            ParamGroup group) {
  BatchNorm b;
  b.gamma = reg.constant(name + ".gamma", {channels}, 1.0, group);
  b.beta = reg.constant(name + ".beta", {channels}, 0.0, group);
  b.stats = reg.stats(name, channels);
  return b;
}

}  // namespace vala
