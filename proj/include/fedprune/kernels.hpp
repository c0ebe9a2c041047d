// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops used by the network and the aggregation code.
//
// Every kernel has a portable scalar reference in kernels::reference and may
// have a vectorised variant. The variant used for 32-bit math is chosen once at
// startup from the host CPU (override with FEDPRUNE_KERNEL=scalar|avx2). 64-bit
// math, which only the gradient checker uses, always runs the reference loops.
//
// GEMM conventions, all row-major with explicit leading dimensions:
//   gemm_nn: C[M,N] = A[M,K]   * B[K,N]
//   gemm_nt: C[M,N] = A[M,K]   * B[N,K]^T
//   gemm_tn: C[M,N] = A[K,M]^T * B[K,N]
// With accumulate=false C is overwritten, otherwise the product is added.

#include <cstddef>
#include <string_view>

namespace fedprune::kernels {

enum class Isa { scalar, avx2 };

using GemmFn = void (*)(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
                        float* c, int ldc, bool accumulate);
using AxpyFn = void (*)(std::size_t n, float alpha, const float* x, float* y);
using DotFn = double (*)(std::size_t n, const float* x, const float* y);

struct KernelTable {
  Isa isa;
  std::string_view name;
  GemmFn gemm_nn;
  GemmFn gemm_nt;
  GemmFn gemm_tn;
  AxpyFn axpy;  // y += alpha * x
  DotFn dot;    // sum x*y accumulated in double
};

const KernelTable& scalar_table();

/// Vectorised table, or nullptr when it was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_table();

/// Table used for float math in this process.
const KernelTable& active();

/// Force a table. Throws ConfigError if the ISA is unavailable. Not thread-safe;
/// meant for tests and start-up.
void select(Isa isa);

Isa parse_isa(std::string_view name);

namespace reference {

template <class T>
void gemm_nn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (!accumulate)
      for (int j = 0; j < n; ++j) crow[j] = T(0);
    for (int p = 0; p < k; ++p) {
      const T av = a[static_cast<std::ptrdiff_t>(i) * lda + p];
      const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void gemm_nt(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<std::ptrdiff_t>(j) * ldb;
      T sum = T(0);
      for (int p = 0; p < k; ++p) sum += arow[p] * brow[p];
      T& out = c[static_cast<std::ptrdiff_t>(i) * ldc + j];
      out = accumulate ? out + sum : sum;
    }
  }
}

template <class T>
void gemm_tn(int m, int n, int k, const T* a, int lda, const T* b, int ldb, T* c, int ldc,
             bool accumulate) {
  if (!accumulate)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c[static_cast<std::ptrdiff_t>(i) * ldc + j] = T(0);
  for (int p = 0; p < k; ++p) {
    const T* arow = a + static_cast<std::ptrdiff_t>(p) * lda;
    const T* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
double dot(std::size_t n, const T* x, const T* y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return sum;
}

}  // namespace reference

// Precision-generic entry points used by the network code.

inline void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool accumulate) {
  active().gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void gemm_nt(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool accumulate) {
  active().gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void gemm_tn(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool accumulate) {
  active().gemm_tn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void axpy(std::size_t n, float alpha, const float* x, float* y) {
  active().axpy(n, alpha, x, y);
}

inline void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc, bool accumulate) {
  reference::gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc, bool accumulate) {
  reference::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb,
                    double* c, int ldc, bool accumulate) {
  reference::gemm_tn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
inline void axpy(std::size_t n, double alpha, const double* x, double* y) {
  reference::axpy(n, alpha, x, y);
}

}  // namespace fedprune::kernels
