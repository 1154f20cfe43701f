#include <algorithm>
#include <cmath>

#include "dsf/kernels.hpp"

namespace dsf::inline DSF_PREC::kernels::ref {

void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
            bool accumulate) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double s = accumulate ? c[i * g.n + j] : 0.0;
      for (std::size_t p = 0; p < g.k; ++p) {
        s += static_cast<double>(a[i * g.k + p]) * b[p * g.n + j];
      }
      c[i * g.n + j] = static_cast<Real>(s);
    }
  }
}

void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
               bool accumulate) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double s = accumulate ? c[i * g.n + j] : 0.0;
      for (std::size_t p = 0; p < g.k; ++p) {
        s += static_cast<double>(a[i * g.k + p]) * b[j * g.k + p];
      }
      c[i * g.n + j] = static_cast<Real>(s);
    }
  }
}

void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
               bool accumulate) {
  for (std::size_t i = 0; i < g.k; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      double s = accumulate ? c[i * g.n + j] : 0.0;
      for (std::size_t p = 0; p < g.m; ++p) {
        s += static_cast<double>(a[p * g.k + i]) * b[p * g.n + j];
      }
      c[i * g.n + j] = static_cast<Real>(s);
    }
  }
}

void softmax_rows(std::span<const Real> x, std::span<Real> y, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.data() + r * cols;
    Real* yr = y.data() + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(static_cast<double>(xr[c]) - mx);
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = static_cast<Real>(std::exp(static_cast<double>(xr[c]) - mx) / sum);
    }
  }
}

void sq_distances(std::span<const Real> a, std::span<const Real> b, std::span<Real> out,
                  std::size_t n, std::size_t m, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = static_cast<double>(a[i * d + p]) - b[j * d + p];
        s += diff * diff;
      }
      out[i * m + j] = static_cast<Real>(s);
    }
  }
}

}  // namespace dsf::inline DSF_PREC::kernels::ref
