#include <algorithm>
#include <cmath>
#include <vector>

#include "dsf/kernels.hpp"

namespace dsf::inline DSF_PREC::kernels::par {

namespace {

// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

std::vector<Real> transpose(std::span<const Real> x, std::size_t rows, std::size_t cols) {
  std::vector<Real> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = x[r * cols + c];
  }
  return t;
}

}  // namespace

void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
            bool accumulate) {
  const std::size_t m = g.m, k = g.k, n = g.n;
  const Real* A = a.data();
  const Real* B = b.data();
  Real* C = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = C + i * n;
    if (!accumulate) std::fill(ci, ci + n, Real{0});
    const Real* ai = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = ai[p];
      const Real* bp = B + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
               bool accumulate) {
  if (g.k >= 8) {
    const auto bt = transpose(b, g.n, g.k);
    matmul(a, bt, c, g, accumulate);
    return;
  }
  const std::size_t m = g.m, k = g.k, n = g.n;
  const Real* A = a.data();
  const Real* B = b.data();
  Real* C = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    const Real* ai = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* bj = B + j * k;
      Real s = accumulate ? C[i * n + j] : Real{0};
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      C[i * n + j] = s;
    }
  }
}

void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
               bool accumulate) {
  // a is [m x k]; its transpose [k x m] times b [m x n].
  const auto at = transpose(a, g.m, g.k);
  matmul(at, b, c, Gemm{g.k, g.m, g.n}, accumulate);
}

void softmax_rows(std::span<const Real> x, std::span<Real> y, std::size_t rows,
                  std::size_t cols) {
  const Real* X = x.data();
  Real* Y = y.data();
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = X + r * cols;
    Real* yr = Y + r * cols;
    const Real mx = *std::max_element(xr, xr + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const Real e = std::exp(xr[c] - mx);
      yr[c] = e;
      sum += e;
    }
    const Real inv = static_cast<Real>(1.0 / sum);
#pragma omp simd
    for (std::size_t c = 0; c < cols; ++c) yr[c] *= inv;
  }
}

void sq_distances(std::span<const Real> a, std::span<const Real> b, std::span<Real> out,
                  std::size_t n, std::size_t m, std::size_t d) {
  const Real* A = a.data();
  const Real* B = b.data();
  Real* O = out.data();
#pragma omp parallel for schedule(static) if (n * m * d > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) {
    const Real* ai = A + i * d;
    Real* oi = O + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const Real* bj = B + j * d;
      Real s = 0;
      for (std::size_t p = 0; p < d; ++p) {
        const Real diff = ai[p] - bj[p];
        s += diff * diff;
      }
      oi[j] = s;
    }
  }
}

}  // namespace dsf::inline DSF_PREC::kernels::par
