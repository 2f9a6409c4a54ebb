#include <limits>

#include "layout.hpp"
#include "vala/numerics/kink.hpp"
#include "vala/numerics/ops.hpp"

namespace vala {

Tensor directional_pool(const Tensor& x, PoolAxis axis, PoolMode mode) {
  const auto d = detail::nchw(x, "directional_pool");
  const bool along_width = axis == PoolAxis::width;
  const std::size_t out_h = along_width ? d.h : 1;
  const std::size_t out_w = along_width ? 1 : d.w;
  const std::size_t span_len = along_width ? d.w : d.h;
  const std::size_t step = along_width ? 1 : d.w;
  const std::size_t planes = d.n * d.c;
  const std::size_t outputs = out_h * out_w;

  std::vector<double> out(planes * outputs);
  std::vector<std::size_t> argmax(mode == PoolMode::max ? out.size() : 0);
  const double* src = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* plane = src + p * d.plane();
    for (std::size_t o = 0; o < outputs; ++o) {
      const std::size_t start = along_width ? o * d.w : o;
      if (mode == PoolMode::max) {
        std::size_t best = start;
        for (std::size_t k = 1; k < span_len; ++k) {
          const std::size_t idx = start + k * step;
          if (plane[idx] > plane[best]) best = idx;
        }
        out[p * outputs + o] = plane[best];
        argmax[p * outputs + o] = p * d.plane() + best;
      } else {
        double acc = 0.0;
        for (std::size_t k = 0; k < span_len; ++k) acc += plane[start + k * step];
        out[p * outputs + o] = acc / static_cast<double>(span_len);
      }
    }
  }
  if (mode == PoolMode::max && kink::active()) {
    for (auto idx : argmax) kink::record(kink::Site::directional_max, idx);
  }

  auto fn = [x, mode, argmax = std::move(argmax), d, along_width, span_len, step, planes,
             outputs](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    if (mode == PoolMode::max) {
      for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
      return;
    }
    const double inv = 1.0 / static_cast<double>(span_len);
    for (std::size_t p = 0; p < planes; ++p) {
      double* plane = dx.data() + p * d.plane();
      for (std::size_t o = 0; o < outputs; ++o) {
        const std::size_t start = along_width ? o * d.w : o;
        const double g = dy[p * outputs + o] * inv;
        for (std::size_t k = 0; k < span_len; ++k) plane[start + k * step] += g;
      }
    }
  };
  return make_result(d.shape_with(d.c, out_h, out_w), std::move(out), "directional_pool", {x},
                     std::move(fn));
}

Tensor global_avg_pool(const Tensor& x) {
  const auto d = detail::nchw(x, "global_avg_pool");
  const std::size_t planes = d.n * d.c;
  const std::size_t area = d.plane();
  std::vector<double> out(planes);
  const double* src = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < area; ++i) acc += src[p * area + i];
    out[p] = acc / static_cast<double>(area);
  }
  auto fn = [x, planes, area](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    const double inv = 1.0 / static_cast<double>(area);
    for (std::size_t p = 0; p < planes; ++p) {
      const double g = dy[p] * inv;
      for (std::size_t i = 0; i < area; ++i) dx[p * area + i] += g;
    }
  };
  return make_result(d.shape_with(d.c, 1, 1), std::move(out), "global_avg_pool", {x},
                     std::move(fn));
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const auto d = detail::nchw(x, "max_pool2d");
  if (kernel < 1 || stride < 1) throw ShapeError("max_pool2d: kernel and stride must be >= 1");
  if (kernel > d.h + 2 * padding || kernel > d.w + 2 * padding) {
    throw ShapeError("max_pool2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  if (padding >= kernel) throw ShapeError("max_pool2d: padding must be smaller than kernel");
  const std::size_t oh = (d.h + 2 * padding - kernel) / stride + 1;
  const std::size_t ow = (d.w + 2 * padding - kernel) / stride + 1;
  const std::size_t planes = d.n * d.c;
  std::vector<double> out(planes * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const double* src = x.data().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oi = 0; oi < oh; ++oi) {
      for (std::size_t oj = 0; oj < ow; ++oj) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * stride + ki) -
                          static_cast<std::ptrdiff_t>(padding);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(d.h)) continue;
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * stride + kj) -
                            static_cast<std::ptrdiff_t>(padding);
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(d.w)) continue;
            const std::size_t idx = p * d.plane() + static_cast<std::size_t>(ii) * d.w +
                                    static_cast<std::size_t>(jj);
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (p * oh + oi) * ow + oj;
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  if (kink::active()) {
    for (auto idx : argmax) kink::record(kink::Site::max_pool, idx);
  }
  auto fn = [x, argmax = std::move(argmax)](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  };
  return make_result(d.shape_with(d.c, oh, ow), std::move(out), "max_pool2d", {x}, std::move(fn));
}

}  // namespace vala
