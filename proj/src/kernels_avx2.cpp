// Compiled with -mavx2 -mfma; only reached through avx2_table() after a
// runtime CPU check.

#include <immintrin.h>

#include "usb/kernels.hpp"

namespace usb::kernels {
namespace {

[[gnu::always_inline]] inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(
        y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double sq_dist_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// One row of A against four rows of B.
[[gnu::always_inline]] inline void dot1x4(const double* a, const double* b0,
                                          const double* b1, const double* b2,
                                          const double* b3, std::size_t k,
                                          double out[4]) {
  __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
  __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const __m256d va = _mm256_loadu_pd(a + p);
    s0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b0 + p), s0);
    s1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b1 + p), s1);
    s2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b2 + p), s2);
    s3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b3 + p), s3);
  }
  out[0] = hsum(s0);
  out[1] = hsum(s1);
  out[2] = hsum(s2);
  out[3] = hsum(s3);
  for (; p < k; ++p) {
    out[0] += a[p] * b0[p];
    out[1] += a[p] * b1[p];
    out[2] += a[p] * b2[p];
    out[3] += a[p] * b3[p];
  }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * lda;
    double* cr = c + i * ldc;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      double v[4];
      dot1x4(ar, b + j * ldb, b + (j + 1) * ldb, b + (j + 2) * ldb,
             b + (j + 3) * ldb, k, v);
      for (int q = 0; q < 4; ++q) cr[j + q] = accumulate ? cr[j + q] + v[q] : v[q];
    }
    for (; j < n; ++j) {
      const double v = dot_avx2(ar, b + j * ldb, k);
      cr[j] = accumulate ? cr[j] + v : v;
    }
  }
}

void gemm_nn_acc_avx2(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p)
      axpy_avx2(a[i * lda + p], b + p * ldb, c + i * ldc, n);
}

void gemm_tn_acc_avx2(std::size_t m, std::size_t n, std::size_t k,
                      const double* a, std::size_t lda, const double* b,
                      std::size_t ldb, double* c, std::size_t ldc) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i)
      axpy_avx2(a[p * lda + i], b + p * ldb, c + i * ldc, n);
}

constexpr KernelTable kAvx2{
    Isa::avx2, dot_avx2, axpy_avx2, sq_dist_avx2, gemm_nt_avx2, gemm_nn_acc_avx2,
    gemm_tn_acc_avx2,
};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace usb::kernels
