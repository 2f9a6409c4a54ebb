#include <array>

#include "vala/numerics/ops.hpp"

namespace vala {

namespace {

// Operand geometry padded to rank 4 with right-aligned broadcasting.
struct Broadcast {
  std::array<std::size_t, 4> out{1, 1, 1, 1};
  std::array<std::size_t, 4> stride_a{}, stride_b{};
  Shape shape;
};

Broadcast plan(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  std::array<std::size_t, 4> ea{1, 1, 1, 1}, eb{1, 1, 1, 1};
  for (std::size_t i = 0; i < a.size(); ++i) ea[4 - a.size() + i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) eb[4 - b.size() + i] = b[i];
  Broadcast p;
  for (std::size_t i = 0; i < 4; ++i) {
    if (ea[i] != eb[i] && ea[i] != 1 && eb[i] != 1) {
      throw ShapeError("elementwise: shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible");
    }
    p.out[i] = std::max(ea[i], eb[i]);
  }
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = 4; i-- > 0;) {
    p.stride_a[i] = ea[i] == 1 ? 0 : sa;
    p.stride_b[i] = eb[i] == 1 ? 0 : sb;
    sa *= ea[i];
    sb *= eb[i];
  }
  p.shape.assign(p.out.begin() + (4 - rank), p.out.end());
  return p;
}

template <class F>
void for_each_index(const Broadcast& p, F&& f) {
  std::size_t o = 0;
  for (std::size_t i0 = 0; i0 < p.out[0]; ++i0) {
    for (std::size_t i1 = 0; i1 < p.out[1]; ++i1) {
      for (std::size_t i2 = 0; i2 < p.out[2]; ++i2) {
        std::size_t ia = i0 * p.stride_a[0] + i1 * p.stride_a[1] + i2 * p.stride_a[2];
        std::size_t ib = i0 * p.stride_b[0] + i1 * p.stride_b[1] + i2 * p.stride_b[2];
        for (std::size_t i3 = 0; i3 < p.out[3]; ++i3, ++o) {
          f(o, ia, ib);
          ia += p.stride_a[3];
          ib += p.stride_b[3];
        }
      }
    }
  }
}

}  // namespace

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op) {
  Broadcast p = plan(a.shape(), b.shape());
  std::vector<double> out(shape_numel(p.shape));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  if (op == BinaryOp::mul) {
    for_each_index(p, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = pa[ia] * pb[ib]; });
  } else {
    for_each_index(p, [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = pa[ia] + pb[ib]; });
  }
  Shape shape = p.shape;
  auto fn = [a, b, op, p](std::span<const double> dy, std::span<const double>) {
    auto da = grad_sink(a);
    auto db = grad_sink(b);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for_each_index(p, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (op == BinaryOp::mul) {
        if (!da.empty()) da[ia] += dy[o] * pb[ib];
        if (!db.empty()) db[ib] += dy[o] * pa[ia];
      } else {
        if (!da.empty()) da[ia] += dy[o];
        if (!db.empty()) db[ib] += dy[o];
      }
    });
  };
  return make_result(std::move(shape), std::move(out), op == BinaryOp::mul ? "mul" : "add",
                     {a, b}, std::move(fn));
}

Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::mul); }

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::add); }

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  auto fn = [x, factor](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * factor;
  };
  return make_result(x.shape(), std::move(out), "scale", {x}, std::move(fn));
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto fn = [x](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    for (double& g : dx) g += dy[0];
  };
  return make_result(Shape{1}, {acc}, "sum", {x}, std::move(fn));
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

}  // namespace vala
