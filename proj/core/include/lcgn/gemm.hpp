#pragma once

namespace lcgn::detail {

// C[m x n] = alpha * op(A) * op(B) + beta * C, row-major, ld* = row strides.
// op(A) is A [m x k] when ta == false, A^T (A stored [k x m]) when ta == true.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc);

}  // namespace lcgn::detail
