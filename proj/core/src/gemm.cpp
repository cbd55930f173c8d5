#include "lcgn/gemm.hpp"

#include <cstdlib>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#ifdef LCGN_USE_CBLAS
#include <cblas.h>
#endif

namespace lcgn::detail {

namespace {

#ifdef __GLIBC__
// Tensor buffers are freed and reallocated at a high rate; keep them on the
// heap freelist instead of bouncing through mmap.
const bool kHeapTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 64 << 20);
  return true;
}();
#endif

#ifdef LCGN_USE_CBLAS
// The products here are too small for threaded BLAS to pay off; thread
// sync dominates. An explicit OPENBLAS_NUM_THREADS still wins.
const bool kBlasThreadsPinned = [] {
  if (std::getenv("OPENBLAS_NUM_THREADS") == nullptr)
    openblas_set_num_threads(1);
  return true;
}();
#endif

template <typename S>
void gemm_ref(bool ta, bool tb, int m, int n, int k, S alpha, const S* a,
              int lda, const S* b, int ldb, S beta, S* c, int ldc) {
  for (int i = 0; i < m; ++i) {
    S* crow = c + static_cast<long>(i) * ldc;
    if (beta == S(0)) {
      for (int j = 0; j < n; ++j) crow[j] = S(0);
    } else if (beta != S(1)) {
      for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    for (int l = 0; l < k; ++l) {
      const S av = alpha * (ta ? a[static_cast<long>(l) * lda + i]
                               : a[static_cast<long>(i) * lda + l]);
      if (av == S(0)) continue;
      if (tb) {
        for (int j = 0; j < n; ++j)
          crow[j] += av * b[static_cast<long>(j) * ldb + l];
      } else {
        const S* brow = b + static_cast<long>(l) * ldb;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

// Below this many multiply-adds the dispatch overhead of a BLAS call beats
// the work itself (the batched N x N edge products hit this constantly).
constexpr long kSmallProduct = 16384;

}  // namespace

#ifdef LCGN_USE_CBLAS

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  if (static_cast<long>(m) * n * k <= kSmallProduct) {
    gemm_ref(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  if (static_cast<long>(m) * n * k <= kSmallProduct) {
    gemm_ref(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

#else

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  gemm_ref(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  gemm_ref(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

#endif

}  // namespace lcgn::detail
