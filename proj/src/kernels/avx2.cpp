// Compiled with -mavx2 -mfma; only reached after a runtime CPUID check.
#include "semsic/kernels/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <algorithm>
#include <limits>

namespace semsic::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// 6x8 register tile: rows i..i+5 of C, columns j..j+7.
inline void tile_6x8(std::size_t k, const double* a, std::size_t lda, const double* b,
                     std::size_t ldb, double* c, std::size_t ldc) {
  __m256d acc[6][2];
  for (int r = 0; r < 6; ++r) {
    acc[r][0] = _mm256_loadu_pd(c + r * ldc);
    acc[r][1] = _mm256_loadu_pd(c + r * ldc + 4);
  }
  const double* a0 = a;
  const double* a1 = a + lda;
  const double* a2 = a + 2 * lda;
  const double* a3 = a + 3 * lda;
  const double* a4 = a + 4 * lda;
  const double* a5 = a + 5 * lda;
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * ldb);
    const __m256d b1 = _mm256_loadu_pd(b + p * ldb + 4);
    __m256d av = _mm256_broadcast_sd(a0 + p);
    acc[0][0] = _mm256_fmadd_pd(av, b0, acc[0][0]);
    acc[0][1] = _mm256_fmadd_pd(av, b1, acc[0][1]);
    av = _mm256_broadcast_sd(a1 + p);
    acc[1][0] = _mm256_fmadd_pd(av, b0, acc[1][0]);
    acc[1][1] = _mm256_fmadd_pd(av, b1, acc[1][1]);
    av = _mm256_broadcast_sd(a2 + p);
    acc[2][0] = _mm256_fmadd_pd(av, b0, acc[2][0]);
    acc[2][1] = _mm256_fmadd_pd(av, b1, acc[2][1]);
    av = _mm256_broadcast_sd(a3 + p);
    acc[3][0] = _mm256_fmadd_pd(av, b0, acc[3][0]);
    acc[3][1] = _mm256_fmadd_pd(av, b1, acc[3][1]);
    av = _mm256_broadcast_sd(a4 + p);
    acc[4][0] = _mm256_fmadd_pd(av, b0, acc[4][0]);
    acc[4][1] = _mm256_fmadd_pd(av, b1, acc[4][1]);
    av = _mm256_broadcast_sd(a5 + p);
    acc[5][0] = _mm256_fmadd_pd(av, b0, acc[5][0]);
    acc[5][1] = _mm256_fmadd_pd(av, b1, acc[5][1]);
  }
  for (int r = 0; r < 6; ++r) {
    _mm256_storeu_pd(c + r * ldc, acc[r][0]);
    _mm256_storeu_pd(c + r * ldc + 4, acc[r][1]);
  }
}

// Single row of C against columns [j0, n).
inline void row_tail(std::size_t j0, std::size_t n, std::size_t k, const double* a,
                     const double* b, std::size_t ldb, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = a[p];
    const __m256d av = _mm256_set1_pd(aip);
    const double* bp = b + p * ldb;
    std::size_t j = j0;
    for (; j + 4 <= n; j += 4)
      _mm256_storeu_pd(c + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + j), _mm256_loadu_pd(c + j)));
    for (; j < n; ++j) c[j] += aip * bp[j];
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  constexpr std::size_t kBlockK = 256;
  const std::size_t n8 = n - n % 8;
  const std::size_t m6 = m - m % 6;
  for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
    const std::size_t kb = std::min(kBlockK, k - p0);
    const double* ap = a + p0;
    const double* bp = b + p0 * ldb;
    for (std::size_t i = 0; i < m6; i += 6) {
      for (std::size_t j = 0; j < n8; j += 8)
        tile_6x8(kb, ap + i * lda, lda, bp + j, ldb, c + i * ldc + j, ldc);
      if (n8 < n)
        for (std::size_t r = 0; r < 6; ++r)
          row_tail(n8, n, kb, ap + (i + r) * lda, bp, ldb, c + (i + r) * ldc);
    }
    for (std::size_t i = m6; i < m; ++i) row_tail(0, n, kb, ap + i * lda, bp, ldb, c + i * ldc);
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale(std::size_t n, double alpha, double* x) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

void add(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(z + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

double max(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= 4) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  }
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

void relu(std::size_t n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(std::size_t n, const double* x, const double* dy, double* dx) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d g = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), g));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::kAvx2, gemm_nn, dot,         axpy, scale,
                                 add,        mul,     sum,         sum_squares,
                                 max,        relu,    relu_backward};
  return &table;
}

}  // namespace semsic::kernels

#else

namespace semsic::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace semsic::kernels

#endif
