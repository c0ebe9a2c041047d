// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime CPU check in dispatch.cpp.

#include "fedprune/kernels.hpp"

#if defined(FEDPRUNE_HAVE_AVX2)

#include <immintrin.h>

namespace fedprune::kernels {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline void zero_rows(int m, int n, float* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    float* row = c + static_cast<std::ptrdiff_t>(i) * ldc;
    for (int j = 0; j < n; ++j) row[j] = 0.0f;
  }
}

// Rank-1 update form shared by NN and TN: C[i, :] += A(i, p) * B[p, :].
template <bool TransA>
struct AIndex {
  const float* a;
  std::ptrdiff_t lda;
  float operator()(int i, int p) const {
    return TransA ? a[static_cast<std::ptrdiff_t>(p) * lda + i]
                  : a[static_cast<std::ptrdiff_t>(i) * lda + p];
  }
};

template <int R, bool TransA>
inline void rank1_rows(int i, int n, int k, AIndex<TransA> at, const float* b, int ldb, float* c,
                       int ldc) {
  float* crow[R];
  for (int r = 0; r < R; ++r) crow[r] = c + static_cast<std::ptrdiff_t>(i + r) * ldc;

  int j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256 acc0[R], acc1[R];
    for (int r = 0; r < R; ++r) {
      acc0[r] = _mm256_loadu_ps(crow[r] + j);
      acc1[r] = _mm256_loadu_ps(crow[r] + j + 8);
    }
    for (int p = 0; p < k; ++p) {
      const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb + j;
      const __m256 b0 = _mm256_loadu_ps(brow);
      const __m256 b1 = _mm256_loadu_ps(brow + 8);
      for (int r = 0; r < R; ++r) {
        const __m256 av = _mm256_set1_ps(at(i + r, p));
        acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
        acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
      }
    }
    for (int r = 0; r < R; ++r) {
      _mm256_storeu_ps(crow[r] + j, acc0[r]);
      _mm256_storeu_ps(crow[r] + j + 8, acc1[r]);
    }
  }
  for (; j + 8 <= n; j += 8) {
    __m256 acc[R];
    for (int r = 0; r < R; ++r) acc[r] = _mm256_loadu_ps(crow[r] + j);
    for (int p = 0; p < k; ++p) {
      const __m256 bv = _mm256_loadu_ps(b + static_cast<std::ptrdiff_t>(p) * ldb + j);
      for (int r = 0; r < R; ++r) acc[r] = _mm256_fmadd_ps(_mm256_set1_ps(at(i + r, p)), bv, acc[r]);
    }
    for (int r = 0; r < R; ++r) _mm256_storeu_ps(crow[r] + j, acc[r]);
  }
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      float sum = crow[r][j];
      for (int p = 0; p < k; ++p) sum += at(i + r, p) * b[static_cast<std::ptrdiff_t>(p) * ldb + j];
      crow[r][j] = sum;
    }
  }
}

template <bool TransA>
void rank1_gemm(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                int ldc, bool accumulate) {
  if (!accumulate) zero_rows(m, n, c, ldc);
  const AIndex<TransA> at{a, lda};
  int i = 0;
  for (; i + 4 <= m; i += 4) rank1_rows<4>(i, n, k, at, b, ldb, c, ldc);
  for (; i < m; ++i) rank1_rows<1>(i, n, k, at, b, ldb, c, ldc);
}

void gemm_nn_avx2(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                  int ldc, bool accumulate) {
  rank1_gemm<false>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void gemm_tn_avx2(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                  int ldc, bool accumulate) {
  rank1_gemm<true>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

// Dot-product form: C[i, j] = <A[i, :], B[j, :]>, blocked 4 rows x 2 columns.
template <int R, int CN>
inline void dot_block(int i, int j, int k, const float* a, int lda, const float* b, int ldb,
                      float* c, int ldc, bool accumulate) {
  const float* arow[R];
  const float* brow[CN];
  for (int r = 0; r < R; ++r) arow[r] = a + static_cast<std::ptrdiff_t>(i + r) * lda;
  for (int q = 0; q < CN; ++q) brow[q] = b + static_cast<std::ptrdiff_t>(j + q) * ldb;

  __m256 acc[R][CN];
  for (int r = 0; r < R; ++r)
    for (int q = 0; q < CN; ++q) acc[r][q] = _mm256_setzero_ps();

  int p = 0;
  for (; p + 8 <= k; p += 8) {
    __m256 bv[CN];
    for (int q = 0; q < CN; ++q) bv[q] = _mm256_loadu_ps(brow[q] + p);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_loadu_ps(arow[r] + p);
      for (int q = 0; q < CN; ++q) acc[r][q] = _mm256_fmadd_ps(av, bv[q], acc[r][q]);
    }
  }
  for (int r = 0; r < R; ++r) {
    for (int q = 0; q < CN; ++q) {
      float sum = hsum(acc[r][q]);
      for (int t = p; t < k; ++t) sum += arow[r][t] * brow[q][t];
      float& out = c[static_cast<std::ptrdiff_t>(i + r) * ldc + j + q];
      out = accumulate ? out + sum : sum;
    }
  }
}

void gemm_nt_avx2(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c,
                  int ldc, bool accumulate) {
  int i = 0;
  for (; i + 4 <= m; i += 4) {
    int j = 0;
    for (; j + 2 <= n; j += 2) dot_block<4, 2>(i, j, k, a, lda, b, ldb, c, ldc, accumulate);
    for (; j < n; ++j) dot_block<4, 1>(i, j, k, a, lda, b, ldb, c, ldc, accumulate);
  }
  for (; i < m; ++i) {
    int j = 0;
    for (; j + 2 <= n; j += 2) dot_block<1, 2>(i, j, k, a, lda, b, ldb, c, ldc, accumulate);
    for (; j < n; ++j) dot_block<1, 1>(i, j, k, a, lda, b, ldb, c, ldc, accumulate);
  }
}

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_avx2(std::size_t n, const float* x, const float* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 xv = _mm256_loadu_ps(x + i);
    const __m256 yv = _mm256_loadu_ps(y + i);
    acc0 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(xv)),
                           _mm256_cvtps_pd(_mm256_castps256_ps128(yv)), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(xv, 1)),
                           _mm256_cvtps_pd(_mm256_extractf128_ps(yv, 1)), acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) sum += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  return sum;
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{Isa::avx2,   "avx2",    gemm_nn_avx2, gemm_nt_avx2,
                                 gemm_tn_avx2, axpy_avx2, dot_avx2};
  return table;
}

}  // namespace fedprune::kernels

#endif  // FEDPRUNE_HAVE_AVX2
