// SPDX-License-Identifier: Apache-2.0
#include "fedprune/kernels.hpp"

namespace fedprune::kernels {
namespace {

void gemm_nn_scalar(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool accumulate) {
  reference::gemm_nn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_nt_scalar(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool accumulate) {
  reference::gemm_nt(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_tn_scalar(int m, int n, int k, const float* a, int lda, const float* b, int ldb,
                    float* c, int ldc, bool accumulate) {
  reference::gemm_tn(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void axpy_scalar(std::size_t n, float alpha, const float* x, float* y) {
  reference::axpy(n, alpha, x, y);
}
double dot_scalar(std::size_t n, const float* x, const float* y) { return reference::dot(n, x, y); }

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar,   "scalar",    gemm_nn_scalar, gemm_nt_scalar,
                                 gemm_tn_scalar, axpy_scalar, dot_scalar};
  return table;
}

}  // namespace fedprune::kernels
