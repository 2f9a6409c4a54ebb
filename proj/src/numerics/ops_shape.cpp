#include <algorithm>

#include "vala/numerics/ops.hpp"

namespace vala {

namespace {

void require_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(x.shape()));
  }
}

// outer x axis_len x inner decomposition around `axis`.
struct Around {
  std::size_t outer = 1, len = 1, inner = 1;
};

Around around(const Shape& s, std::size_t axis) {
  Around r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto fn = [x](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  };
  return make_result(std::move(shape), std::move(out), "reshape", {x}, std::move(fn));
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  require_axis(a, axis, "concat");
  if (a.rank() != b.rank()) {
    throw ShapeError("concat: rank mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw ShapeError("concat: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                       " differ off the concatenation axis");
    }
  }
  const Around ra = around(a.shape(), axis), rb = around(b.shape(), axis);
  const std::size_t len = ra.len + rb.len;
  std::vector<double> out(a.numel() + b.numel());
  for (std::size_t o = 0; o < ra.outer; ++o) {
    std::copy_n(a.data().data() + o * ra.len * ra.inner, ra.len * ra.inner,
                out.data() + o * len * ra.inner);
    std::copy_n(b.data().data() + o * rb.len * rb.inner, rb.len * rb.inner,
                out.data() + (o * len + ra.len) * ra.inner);
  }
  Shape shape = a.shape();
  shape[axis] = len;
  auto fn = [a, b, ra, rb, len](std::span<const double> dy, std::span<const double>) {
    auto da = grad_sink(a);
    auto db = grad_sink(b);
    for (std::size_t o = 0; o < ra.outer; ++o) {
      const double* row = dy.data() + o * len * ra.inner;
      if (!da.empty()) {
        for (std::size_t i = 0; i < ra.len * ra.inner; ++i) da[o * ra.len * ra.inner + i] += row[i];
      }
      if (!db.empty()) {
        for (std::size_t i = 0; i < rb.len * rb.inner; ++i) {
          db[o * rb.len * rb.inner + i] += row[ra.len * ra.inner + i];
        }
      }
    }
  };
  return make_result(std::move(shape), std::move(out), "concat", {a, b}, std::move(fn));
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_axis(x, axis, "slice");
  if (length == 0 || start + length > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") invalid for axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const Around r = around(x.shape(), axis);
  std::vector<double> out(r.outer * length * r.inner);
  for (std::size_t o = 0; o < r.outer; ++o) {
    std::copy_n(x.data().data() + (o * r.len + start) * r.inner, length * r.inner,
                out.data() + o * length * r.inner);
  }
  Shape shape = x.shape();
  shape[axis] = length;
  auto fn = [x, r, start, length](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    for (std::size_t o = 0; o < r.outer; ++o) {
      for (std::size_t i = 0; i < length * r.inner; ++i) {
        dx[(o * r.len + start) * r.inner + i] += dy[o * length * r.inner + i];
      }
    }
  };
  return make_result(std::move(shape), std::move(out), "slice", {x}, std::move(fn));
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last2: rank >= 2 required");
  const std::size_t rows = x.shape()[x.rank() - 2];
  const std::size_t cols = x.shape()[x.rank() - 1];
  const std::size_t mats = x.numel() / (rows * cols);
  std::vector<double> out(x.numel());
  for (std::size_t m = 0; m < mats; ++m) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        out[m * rows * cols + j * rows + i] = x.data()[m * rows * cols + i * cols + j];
      }
    }
  }
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  auto fn = [x, rows, cols, mats](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    for (std::size_t m = 0; m < mats; ++m) {
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          dx[m * rows * cols + i * cols + j] += dy[m * rows * cols + j * rows + i];
        }
      }
    }
  };
  return make_result(std::move(shape), std::move(out), "transpose", {x}, std::move(fn));
}

Tensor join_directional(const Tensor& height_branch, const Tensor& width_branch) {
  const auto& hs = height_branch.shape();
  const auto& ws = width_branch.shape();
  if (hs.size() < 3 || hs.size() != ws.size() || hs.back() != 1 || ws[ws.size() - 2] != 1) {
    throw ShapeError("join_directional: expected c x h x 1 and c x 1 x w, got " + shape_str(hs) +
                     " and " + shape_str(ws));
  }
  if (!std::equal(hs.begin(), hs.end() - 2, ws.begin())) {
    throw ShapeError("join_directional: channel/batch mismatch between " + shape_str(hs) +
                     " and " + shape_str(ws));
  }
  return concat(height_branch, transpose_last2(width_branch), hs.size() - 2);
}

std::pair<Tensor, Tensor> split_directional(const Tensor& joint, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ShapeError("split_directional: h and w must be positive");
  if (joint.rank() < 3 || joint.shape().back() != 1 ||
      joint.shape()[joint.rank() - 2] != h + w) {
    throw ShapeError("split_directional: " + shape_str(joint.shape()) + " is not c x (" +
                     std::to_string(h) + "+" + std::to_string(w) + ") x 1");
  }
  const std::size_t axis = joint.rank() - 2;
  return {slice(joint, axis, 0, h), transpose_last2(slice(joint, axis, h, w))};
}

Tensor repeat_interleave(const Tensor& x, std::size_t axis, std::size_t repeats) {
  require_axis(x, axis, "repeat_interleave");
  if (repeats == 0) throw ShapeError("repeat_interleave: repeats must be positive");
  const Around r = around(x.shape(), axis);
  const std::size_t len = r.len * repeats;
  std::vector<double> out(x.numel() * repeats);
  for (std::size_t o = 0; o < r.outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      std::copy_n(x.data().data() + (o * r.len + k / repeats) * r.inner, r.inner,
                  out.data() + (o * len + k) * r.inner);
    }
  }
  Shape shape = x.shape();
  shape[axis] = len;
  auto fn = [x, r, len, repeats](std::span<const double> dy, std::span<const double>) {
    auto dx = grad_sink(x);
    if (dx.empty()) return;
    for (std::size_t o = 0; o < r.outer; ++o) {
      for (std::size_t k = 0; k < len; ++k) {
        for (std::size_t i = 0; i < r.inner; ++i) {
          dx[(o * r.len + k / repeats) * r.inner + i] += dy[(o * len + k) * r.inner + i];
        }
      }
    }
  };
  return make_result(std::move(shape), std::move(out), "repeat_interleave", {x}, std::move(fn));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack: no tensors");
  const Shape& first = items.front().shape();
  if (first.size() >= 4) throw ShapeError("stack: result would exceed rank 4");
  const std::size_t each = items.front().numel();
  std::vector<double> out;
  out.reserve(each * items.size());
  for (const auto& t : items) {
    if (t.shape() != first) {
      throw ShapeError("stack: " + shape_str(t.shape()) + " differs from " + shape_str(first));
    }
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), first.begin(), first.end());
  std::vector<Tensor> inputs(items.begin(), items.end());
  auto fn = [inputs, each](std::span<const double> dy, std::span<const double>) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto dx = grad_sink(inputs[k]);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[k * each + i];
    }
  };
  return make_result(std::move(shape), std::move(out), "stack", inputs, std::move(fn));
}

}  // namespace vala
