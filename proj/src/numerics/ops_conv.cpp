#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "gemm.hpp"
#include "layout.hpp"
#include "vala/numerics/ops.hpp"

namespace vala {

namespace {

struct ConvGeometry {
  std::size_t c, h, w, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t sites() const { return oh * ow; }
};

// Column matrices hold one row per (channel, ki, kj) and one column per
// (sample, output site); `ld` is the row length, `col0` the sample's first
// column.
void im2col(const ConvGeometry& g, const double* x, double* cols, std::size_t ld,
            std::size_t col0) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((ch * g.kh + ki) * g.kw + kj) * ld + col0;
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          const bool row_inside = ii >= 0 && ii < static_cast<std::ptrdiff_t>(g.h);
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = row_inside && jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.w);
            row[oi * g.ow + oj] = inside ? x[(ch * g.h + ii) * g.w + jj] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, std::size_t ld, std::size_t col0,
            double* dx) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((ch * g.kh + ki) * g.kw + kj) * ld + col0;
        for (std::size_t oi = 0; oi < g.oh; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t oj = 0; oj < g.ow; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dx[(ch * g.h + ii) * g.w + jj] += row[oi * g.ow + oj];
          }
        }
      }
    }
  }
}

struct Columns {
  std::unique_ptr<double[]> data;  // every element is written by im2col
  const double* get() const { return data.get(); }
};

Columns batch_columns(const ConvGeometry& g, const double* x, std::size_t n, std::size_t sample) {
  const std::size_t ld = n * g.sites();
  Columns cols{std::make_unique_for_overwrite<double[]>(g.patch() * ld)};
  for (std::size_t s = 0; s < n; ++s) im2col(g, x + s * sample, cols.data.get(), ld, s * g.sites());
  return cols;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  const auto in = detail::nchw(input, "conv2d");
  if (weight.rank() != 4) {
    throw ShapeError("conv2d: weight must be O x C x kh x kw, got " + shape_str(weight.shape()));
  }
  const std::size_t out_c = weight.dim(0);
  if (weight.dim(1) != in.c) {
    throw ShapeError("conv2d: input has " + std::to_string(in.c) + " channels but weight " +
                     shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_c)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(out_c) + " output channels");
  }
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  const std::size_t kh = weight.dim(2), kw = weight.dim(3);
  if (kh > in.h + 2 * padding || kw > in.w + 2 * padding) {
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  }
  ConvGeometry g{in.c, in.h, in.w, kh, kw, stride, padding,
                 (in.h + 2 * padding - kh) / stride + 1, (in.w + 2 * padding - kw) / stride + 1};

  const std::size_t sites = g.sites();
  const std::size_t patch = g.patch();
  const std::size_t ld = in.n * sites;
  // One product for the whole batch: [out_c x patch] * [patch x N*sites].
  std::vector<double> wide(out_c * ld, 0.0);
  auto cols = std::make_shared<Columns>(batch_columns(g, input.data().data(), in.n, in.sample()));
  detail::gemm_nn(out_c, ld, patch, weight.data().data(), cols->get(), wide.data());
  // The weight gradient reuses the column matrix; keep it only when a
  // backward pass can happen.
  const bool keep = grad_enabled() && (input.requires_grad() || weight.requires_grad() ||
                                       (bias.defined() && bias.requires_grad()));
  if (!keep) cols.reset();
  std::vector<double> out(in.n * out_c * sites);
  for (std::size_t s = 0; s < in.n; ++s)
    for (std::size_t o = 0; o < out_c; ++o) {
      const double b = bias.defined() ? bias.data()[o] : 0.0;
      const double* src = wide.data() + o * ld + s * sites;
      double* dst = out.data() + (s * out_c + o) * sites;
      for (std::size_t p = 0; p < sites; ++p) dst[p] = b + src[p];
    }

  auto fn = [input, weight, bias, g, in, out_c, cols](std::span<const double> dy,
                                                std::span<const double>) {
    auto dx = grad_sink(input);
    auto dw = grad_sink(weight);
    auto db = grad_sink(bias);
    const std::size_t sites = g.sites();
    const std::size_t patch = g.patch();
    const std::size_t ld = in.n * sites;
    std::vector<double> dy_wide(out_c * ld);
    for (std::size_t s = 0; s < in.n; ++s)
      for (std::size_t o = 0; o < out_c; ++o) {
        const double* src = dy.data() + (s * out_c + o) * sites;
        std::copy(src, src + sites, dy_wide.data() + o * ld + s * sites);
      }
    if (!db.empty()) {
      for (std::size_t o = 0; o < out_c; ++o) {
        double acc = 0.0;
        for (std::size_t t = 0; t < ld; ++t) acc += dy_wide[o * ld + t];
        db[o] += acc;
      }
    }
    if (!dw.empty()) {
      detail::gemm_nt(out_c, patch, ld, dy_wide.data(), cols->get(), dw.data());
    }
    if (!dx.empty()) {
      std::vector<double> dcols(patch * ld, 0.0);
      detail::gemm_tn(patch, ld, out_c, weight.data().data(), dy_wide.data(), dcols.data());
      for (std::size_t s = 0; s < in.n; ++s) {
        col2im(g, dcols.data(), ld, s * sites, dx.data() + s * in.sample());
      }
    }
  };
  std::vector<Tensor> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(in.shape_with(out_c, g.oh, g.ow), std::move(out), "conv2d", std::move(inputs),
                     std::move(fn));
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) {
    throw ShapeError("linear: weight must be m x n, got " + shape_str(weight.shape()));
  }
  const std::size_t m = weight.dim(0), n = weight.dim(1);
  std::size_t batch = 1;
  if (x.rank() == 1) {
    if (x.dim(0) != n) {
      throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                       shape_str(weight.shape()));
    }
  } else if (x.rank() == 2) {
    if (x.dim(1) != n) {
      throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                       shape_str(weight.shape()));
    }
    batch = x.dim(0);
  } else {
    throw ShapeError("linear: input must be n or N x n, got " + shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != m)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(m) + " outputs");
  }

  std::vector<double> out(batch * m, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) out[b * m + i] = bias.defined() ? bias.data()[i] : 0.0;
  }
  // out[b x m] += x[b x n] * W[m x n]^T
  detail::gemm_nt(batch, m, n, x.data().data(), weight.data().data(), out.data());

  auto fn = [x, weight, bias, batch, m, n](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    auto dw = grad_sink(weight);
    auto db = grad_sink(bias);
    if (!db.empty()) {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < m; ++i) db[i] += dy[b * m + i];
      }
    }
    if (!dw.empty()) detail::gemm_tn(m, n, batch, dy.data(), x.data().data(), dw.data());
    if (!dx.empty()) detail::gemm_nn(batch, n, m, dy.data(), weight.data().data(), dx.data());
  };
  Shape shape = x.rank() == 1 ? Shape{m} : Shape{batch, m};
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(std::move(shape), std::move(out), "linear", std::move(inputs), std::move(fn));
}

}  // namespace vala
