// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// is only entered after a runtime CPU check, so it must not instantiate any
// inline library templates that other translation units could share.

#include <immintrin.h>

#include <cstdlib>

#include "lightllm/kernels.hpp"

namespace lightllm::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  const __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

// C[i0..i0+R, :] += A' * B where A'(i, p) = a[i * rs + p * cs] and B is k x n.
template <int R>
inline void gemm_row_block(std::size_t i0, std::size_t n, std::size_t k, const double* a,
                           std::size_t rs, std::size_t cs, const double* b, double* c) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d acc0[R];
    __m256d acc1[R];
    for (int r = 0; r < R; ++r) {
      acc0[r] = _mm256_loadu_pd(c + (i0 + r) * n + j);
      acc1[r] = _mm256_loadu_pd(c + (i0 + r) * n + j + 4);
    }
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
      const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
      for (int r = 0; r < R; ++r) {
        const __m256d av = _mm256_set1_pd(a[(i0 + r) * rs + p * cs]);
        acc0[r] = _mm256_fmadd_pd(av, b0, acc0[r]);
        acc1[r] = _mm256_fmadd_pd(av, b1, acc1[r]);
      }
    }
    for (int r = 0; r < R; ++r) {
      _mm256_storeu_pd(c + (i0 + r) * n + j, acc0[r]);
      _mm256_storeu_pd(c + (i0 + r) * n + j + 4, acc1[r]);
    }
  }
  for (; j + 4 <= n; j += 4) {
    __m256d acc[R];
    for (int r = 0; r < R; ++r) acc[r] = _mm256_loadu_pd(c + (i0 + r) * n + j);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d bv = _mm256_loadu_pd(b + p * n + j);
      for (int r = 0; r < R; ++r)
        acc[r] = _mm256_fmadd_pd(_mm256_set1_pd(a[(i0 + r) * rs + p * cs]), bv, acc[r]);
    }
    for (int r = 0; r < R; ++r) _mm256_storeu_pd(c + (i0 + r) * n + j, acc[r]);
  }
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      double acc = c[(i0 + r) * n + j];
      for (std::size_t p = 0; p < k; ++p) acc += a[(i0 + r) * rs + p * cs] * b[p * n + j];
      c[(i0 + r) * n + j] = acc;
    }
  }
}

inline void gemm_strided(std::size_t m, std::size_t n, std::size_t k, const double* a,
                         std::size_t rs, std::size_t cs, const double* b, double* c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) gemm_row_block<4>(i, n, k, a, rs, cs, b, c);
  for (; i < m; ++i) gemm_row_block<1>(i, n, k, a, rs, cs, b, c);
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  gemm_strided(m, n, k, a, k, 1, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  gemm_strided(m, n, k, a, 1, m, b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  // Tall products: transpose B once and reuse the broadcast kernel, which
  // beats per-row dot products. Plain malloc keeps templates out of this TU.
  if (m >= 8 && n >= 8) {
    double* bt = static_cast<double*>(std::malloc(n * k * sizeof(double)));
    if (bt) {
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
      gemm_strided(m, n, k, a, k, 1, bt, c);
      std::free(bt);
      return;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd();
      __m256d s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double r0 = hsum(s0);
      double r1 = hsum(s1);
      double r2 = hsum(s2);
      double r3 = hsum(s3);
      for (; p < k; ++p) {
        r0 += arow[p] * b0[p];
        r1 += arow[p] * b1[p];
        r2 += arow[p] * b2[p];
        r3 += arow[p] * b3[p];
      }
      crow[j] += r0;
      crow[j + 1] += r1;
      crow[j + 2] += r2;
      crow[j + 3] += r3;
    }
    for (; j < n; ++j) crow[j] += dot(arow, b + j * k, k);
  }
}

}  // namespace lightllm::kernels::avx2
