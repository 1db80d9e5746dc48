// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be entered after the runtime CPU check in
// kernels.cpp. Elementwise kernels are lane-exact against the scalar
// reference; dot/sum/gemm use multiple accumulators and therefore
// reassociate.

#include "cmcr/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define CMCR_HAVE_AVX2_BUILD 1
#include <immintrin.h>

#include <cmath>
#include <limits>

namespace cmcr::kern {
namespace {

void add_avx2(const float* a, const float* b, float* o, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) o[i] = a[i] + b[i];
}

void sub_avx2(const float* a, const float* b, float* o, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_sub_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) o[i] = a[i] - b[i];
}

void mul_avx2(const float* a, const float* b, float* o, size_t n) {
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                          _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) o[i] = a[i] * b[i];
}

void axpy_avx2(float alpha, const float* x, float* y, size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(
        y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_avx2(float alpha, const float* x, float* o, size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(o + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  for (; i < n; ++i) o[i] = alpha * x[i];
}

float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

float dot_avx2(const float* a, const float* b, size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float r = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

float sum_avx2(const float* a, size_t n) {
  __m256 acc = _mm256_setzero_ps();
  size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(a + i));
  float r = hsum(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

float max_avx2(const float* a, size_t n) {
  if (n == 0) return -std::numeric_limits<float>::infinity();
  float m = a[0];
  size_t i = 0;
  if (n >= 8) {
    __m256 vm = _mm256_loadu_ps(a);
    for (i = 8; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(a + i));
    alignas(32) float tmp[8];
    _mm256_store_ps(tmp, vm);
    m = tmp[0];
    for (int j = 1; j < 8; ++j) m = tmp[j] > m ? tmp[j] : m;
  }
  for (; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

// 6x16 microkernel: 12 accumulator registers, two B vectors, one A broadcast.
template <int MR>
void gemm_tile16(size_t n_k, const float* a, size_t lda, const float* b,
                 size_t ldb, bool accumulate, float* c, size_t ldc) {
  __m256 acc[MR][2];
  for (int i = 0; i < MR; ++i) {
    if (accumulate) {
      acc[i][0] = _mm256_loadu_ps(c + i * ldc);
      acc[i][1] = _mm256_loadu_ps(c + i * ldc + 8);
    } else {
      acc[i][0] = _mm256_setzero_ps();
      acc[i][1] = _mm256_setzero_ps();
    }
  }
  for (size_t p = 0; p < n_k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
    const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
    for (int i = 0; i < MR; ++i) {
      const __m256 av = _mm256_broadcast_ss(a + i * lda + p);
      acc[i][0] = _mm256_fmadd_ps(av, b0, acc[i][0]);
      acc[i][1] = _mm256_fmadd_ps(av, b1, acc[i][1]);
    }
  }
  for (int i = 0; i < MR; ++i) {
    _mm256_storeu_ps(c + i * ldc, acc[i][0]);
    _mm256_storeu_ps(c + i * ldc + 8, acc[i][1]);
  }
}

template <int MR>
void gemm_tile8(size_t n_k, const float* a, size_t lda, const float* b,
                size_t ldb, bool accumulate, float* c, size_t ldc) {
  __m256 acc[MR];
  for (int i = 0; i < MR; ++i)
    acc[i] = accumulate ? _mm256_loadu_ps(c + i * ldc) : _mm256_setzero_ps();
  for (size_t p = 0; p < n_k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
    for (int i = 0; i < MR; ++i)
      acc[i] = _mm256_fmadd_ps(_mm256_broadcast_ss(a + i * lda + p), b0, acc[i]);
  }
  for (int i = 0; i < MR; ++i) _mm256_storeu_ps(c + i * ldc, acc[i]);
}

void gemm_rows_scalar(size_t mr, size_t j0, size_t n, size_t k, const float* a,
                      size_t lda, const float* b, size_t ldb, bool accumulate,
                      float* c, size_t ldc) {
  for (size_t i = 0; i < mr; ++i) {
    for (size_t j = j0; j < n; ++j) {
      float acc = accumulate ? c[i * ldc + j] : 0.0f;
      for (size_t p = 0; p < k; ++p) acc += a[i * lda + p] * b[p * ldb + j];
      c[i * ldc + j] = acc;
    }
  }
}

void gemm_avx2(size_t m, size_t n, size_t k, const float* a, size_t lda,
               const float* b, size_t ldb, bool accumulate, float* c,
               size_t ldc) {
  size_t i = 0;
  for (; i + 6 <= m; i += 6) {
    size_t j = 0;
    for (; j + 16 <= n; j += 16)
      gemm_tile16<6>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc);
    for (; j + 8 <= n; j += 8)
      gemm_tile8<6>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc);
    if (j < n)
      gemm_rows_scalar(6, j, n, k, a + i * lda, lda, b, ldb, accumulate, c + i * ldc, ldc);
  }
  const size_t mr = m - i;
  if (mr == 0) return;
  size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    switch (mr) {
      case 1: gemm_tile16<1>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
      case 2: gemm_tile16<2>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
      case 3: gemm_tile16<3>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
      case 4: gemm_tile16<4>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
      default: gemm_tile16<5>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
    }
  }
  for (; j + 8 <= n; j += 8) {
    switch (mr) {
      case 1: gemm_tile8<1>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
      case 2: gemm_tile8<2>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
      case 3: gemm_tile8<3>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
      case 4: gemm_tile8<4>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
      default: gemm_tile8<5>(k, a + i * lda, lda, b + j, ldb, accumulate, c + i * ldc + j, ldc); break;
    }
  }
  if (j < n)
    gemm_rows_scalar(mr, j, n, k, a + i * lda, lda, b, ldb, accumulate, c + i * ldc, ldc);
}

void adam_avx2(float* p, const float* g, float* m, float* v, size_t n,
               float lr, float b1, float b2, float eps, float bc1, float bc2) {
  const __m256 vb1 = _mm256_set1_ps(b1);
  const __m256 vb2 = _mm256_set1_ps(b2);
  const __m256 v1mb1 = _mm256_set1_ps(1.0f - b1);
  const __m256 v1mb2 = _mm256_set1_ps(1.0f - b2);
  const __m256 vlr = _mm256_set1_ps(lr);
  const __m256 veps = _mm256_set1_ps(eps);
  const __m256 vrbc1 = _mm256_set1_ps(1.0f / bc1);
  const __m256 vrbc2 = _mm256_set1_ps(1.0f / bc2);
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_fmadd_ps(vb1, mv, _mm256_mul_ps(v1mb1, gv));
    vv = _mm256_fmadd_ps(vb2, vv, _mm256_mul_ps(v1mb2, _mm256_mul_ps(gv, gv)));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_mul_ps(mv, vrbc1);
    const __m256 vhat = _mm256_mul_ps(vv, vrbc2);
    const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
    const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), den);
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
  }
  for (; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
    p[i] -= lr * (m[i] * (1.0f / bc1)) / (std::sqrt(v[i] * (1.0f / bc2)) + eps);
  }
}

// double variants: 4-wide elementwise; gemm/adam reuse the reference loop
// (the double path only runs in gradient checks on tiny shapes).
void add_avx2_d(const double* a, const double* b, double* o, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] + b[i];
}

void sub_avx2_d(const double* a, const double* b, double* o, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] - b[i];
}

void mul_avx2_d(const double* a, const double* b, double* o, size_t n) {
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) o[i] = a[i] * b[i];
}

void axpy_avx2_d(double alpha, const double* x, double* y, size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale_avx2_d(double alpha, const double* x, double* o, size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(o + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) o[i] = alpha * x[i];
}

double hsum_d(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_avx2_d(const double* a, const double* b, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double r = hsum_d(acc);
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

double sum_avx2_d(const double* a, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double r = hsum_d(acc);
  for (; i < n; ++i) r += a[i];
  return r;
}

double max_avx2_d(const double* a, size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  double m = a[0];
  for (size_t i = 1; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

void gemm_ref_d(size_t m, size_t n, size_t k, const double* a, size_t lda,
                const double* b, size_t ldb, bool accumulate, double* c,
                size_t ldc) {
  for (size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (!accumulate)
      for (size_t j = 0; j < n; ++j) crow[j] = 0;
    for (size_t p = 0; p < k; ++p) {
      const double av = a[i * lda + p];
      if (av == 0.0) continue;
      const double* brow = b + p * ldb;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void adam_ref_d(double* p, const double* g, double* m, double* v, size_t n,
                double lr, double b1, double b2, double eps, double bc1,
                double bc2) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

}  // namespace

const Tables* avx2_tables_impl() {
  static const Tables t = {
      {add_avx2, sub_avx2, mul_avx2, axpy_avx2, scale_avx2, dot_avx2,
       sum_avx2, max_avx2, gemm_avx2, adam_avx2},
      {add_avx2_d, sub_avx2_d, mul_avx2_d, axpy_avx2_d, scale_avx2_d,
       dot_avx2_d, sum_avx2_d, max_avx2_d, gemm_ref_d, adam_ref_d},
      "avx2"};
  return &t;
}

}  // namespace cmcr::kern

#else

namespace cmcr::kern {
const Tables* avx2_tables_impl() { return nullptr; }
}  // namespace cmcr::kern

#endif
