#pragma once

#include <cstddef>
#include <algorithm>
#include <vector>

// Row-major accumulating matrix products used by conv2d and linear. Every
// inner loop is an independent multiply-add per output element, so the wide
// clone produces the same bits as the baseline one.
namespace vala::detail {

#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
#define VALA_WIDE_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define VALA_WIDE_CLONES
#endif

// C[m x n] += A * B[k x n] where A(i, p) = a[i * row_step + p * col_step].
// A 4 x 8 tile of C stays in registers for the whole k loop; each element
// still accumulates its products in increasing p.
VALA_WIDE_CLONES inline void gemm_kernel(std::size_t m, std::size_t n, std::size_t k,
                                         const double* a, std::size_t row_step,
                                         std::size_t col_step, const double* b, double* c) {
  using V = double __attribute__((vector_size(32), aligned(8), may_alias));
  constexpr std::size_t R = 4, W = 8;
  const std::size_t n_full = n - n % W, m_full = m - m % R;
  // Column tiles of B are packed into contiguous k x 8 panels so the kernel
  // streams them instead of striding across rows.
  constexpr std::size_t kTile = 256;
  thread_local std::vector<double> packed;
  packed.resize(k * kTile);
  for (std::size_t j0 = 0; j0 < n_full; j0 += kTile) {
    const std::size_t width = std::min(kTile, n_full - j0);
    for (std::size_t p = 0; p < k; ++p) {
      const double* src = b + p * n + j0;
      for (std::size_t q = 0; q < width; q += W) {
        double* dst = packed.data() + q * k + p * W;
        for (std::size_t t = 0; t < W; ++t) dst[t] = src[q + t];
      }
    }
    for (std::size_t q = 0; q < width; q += W) {
      const std::size_t j = j0 + q;
      const double* panel = packed.data() + q * k;
      for (std::size_t i = 0; i < m_full; i += R) {
        double* c0 = c + i * n + j;
        V x0 = *reinterpret_cast<const V*>(c0), y0 = *reinterpret_cast<const V*>(c0 + 4);
        V x1 = *reinterpret_cast<const V*>(c0 + n), y1 = *reinterpret_cast<const V*>(c0 + n + 4);
        V x2 = *reinterpret_cast<const V*>(c0 + 2 * n);
        V y2 = *reinterpret_cast<const V*>(c0 + 2 * n + 4);
        V x3 = *reinterpret_cast<const V*>(c0 + 3 * n);
        V y3 = *reinterpret_cast<const V*>(c0 + 3 * n + 4);
        const double* ap = a + i * row_step;
        const double* bp = panel;
        for (std::size_t p = 0; p < k; ++p, ap += col_step, bp += W) {
          const V lo = *reinterpret_cast<const V*>(bp), hi = *reinterpret_cast<const V*>(bp + 4);
          const double a0 = ap[0], a1 = ap[row_step], a2 = ap[2 * row_step],
                       a3 = ap[3 * row_step];
          x0 += a0 * lo;
          y0 += a0 * hi;
          x1 += a1 * lo;
          y1 += a1 * hi;
          x2 += a2 * lo;
          y2 += a2 * hi;
          x3 += a3 * lo;
          y3 += a3 * hi;
        }
        *reinterpret_cast<V*>(c0) = x0;
        *reinterpret_cast<V*>(c0 + 4) = y0;
        *reinterpret_cast<V*>(c0 + n) = x1;
        *reinterpret_cast<V*>(c0 + n + 4) = y1;
        *reinterpret_cast<V*>(c0 + 2 * n) = x2;
        *reinterpret_cast<V*>(c0 + 2 * n + 4) = y2;
        *reinterpret_cast<V*>(c0 + 3 * n) = x3;
        *reinterpret_cast<V*>(c0 + 3 * n + 4) = y3;
      }
    }
  }
  auto edge = [&](std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1) {
    for (std::size_t i = i0; i < i1; ++i) {
      double* __restrict crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * row_step + p * col_step];
        const double* __restrict brow = b + p * n;
        for (std::size_t jj = j0; jj < j1; ++jj) crow[jj] += av * brow[jj];
      }
    }
  };
  edge(m_full, m, 0, n_full);
  edge(0, m, n_full, n);
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  gemm_kernel(m, n, k, a, k, 1, b, c);
}

// C[m x n] += A[k x m]^T * B[k x n]
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  gemm_kernel(m, n, k, a, 1, m, b, c);
}

// C[m x n] += A[m x k] * B[n x k]^T, through a transposed copy of B.
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                    double* c) {
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, n, k, a, bt.data(), c);
}

}  // namespace vala::detail
