#pragma once

// Dense compute kernels. `par` is the OpenMP implementation used by the
// library; `ref` is a plain serial implementation with 64-bit accumulation
// that tests and the benchmark compare against.
//
// Every par kernel partitions work by output row and keeps a fixed reduction
// order inside a row, so results do not depend on the thread count.

#include <cstddef>
#include <span>

#include "dsf/precision.hpp"

namespace dsf::inline DSF_PREC::kernels {

/// c[m x n] (=|+=) a[m x k] * b[k x n]
struct Gemm {
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
};

namespace ref {

void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
            bool accumulate = false);
/// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
               bool accumulate = false);
/// c[k x n] = a[m x k]^T * b[m x n]
void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
               bool accumulate = false);
void softmax_rows(std::span<const Real> x, std::span<Real> y, std::size_t rows,
                  std::size_t cols);
/// out[n x m] squared euclidean distances between rows of a[n x d] and b[m x d].
void sq_distances(std::span<const Real> a, std::span<const Real> b, std::span<Real> out,
                  std::size_t n, std::size_t m, std::size_t d);

}  // namespace ref

namespace par {

void matmul(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
            bool accumulate = false);
void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
               bool accumulate = false);
void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, Gemm g,
               bool accumulate = false);
void softmax_rows(std::span<const Real> x, std::span<Real> y, std::size_t rows,
                  std::size_t cols);
void sq_distances(std::span<const Real> a, std::span<const Real> b, std::span<Real> out,
                  std::size_t n, std::size_t m, std::size_t d);

}  // namespace par

}  // namespace dsf::inline DSF_PREC::kernels
