// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <limits>

#include "cmcr/kernels.hpp"

namespace cmcr::kern {
namespace {

template <class T>
void add_ref(const T* a, const T* b, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

template <class T>
void sub_ref(const T* a, const T* b, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

template <class T>
void mul_ref(const T* a, const T* b, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

template <class T>
void axpy_ref(T alpha, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale_ref(T alpha, const T* x, T* o, size_t n) {
  for (size_t i = 0; i < n; ++i) o[i] = alpha * x[i];
}

template <class T>
T dot_ref(const T* a, const T* b, size_t n) {
  T acc = 0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
T sum_ref(const T* a, size_t n) {
  T acc = 0;
  for (size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

template <class T>
T max_ref(const T* a, size_t n) {
  if (n == 0) return -std::numeric_limits<T>::infinity();
  T m = a[0];
  for (size_t i = 1; i < n; ++i) m = a[i] > m ? a[i] : m;
  return m;
}

// Reference GEMM. ikj order keeps the inner loop contiguous over B and C.
template <class T>
void gemm_ref(size_t m, size_t n, size_t k, const T* a, size_t lda, const T* b,
              size_t ldb, bool accumulate, T* c, size_t ldc) {
  for (size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (!accumulate)
      for (size_t j = 0; j < n; ++j) crow[j] = 0;
    for (size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      if (av == T(0)) continue;
      const T* brow = b + p * ldb;
      for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
void adam_ref(T* p, const T* g, T* m, T* v, size_t n, T lr, T b1, T b2, T eps,
              T bc1, T bc2) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * g[i];
    v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const Tables& scalar_tables() {
  static const Tables t = {
      {add_ref<float>, sub_ref<float>, mul_ref<float>, axpy_ref<float>,
       scale_ref<float>, dot_ref<float>, sum_ref<float>, max_ref<float>,
       gemm_ref<float>, adam_ref<float>},
      {add_ref<double>, sub_ref<double>, mul_ref<double>, axpy_ref<double>,
       scale_ref<double>, dot_ref<double>, sum_ref<double>, max_ref<double>,
       gemm_ref<double>, adam_ref<double>},
      "scalar"};
  return t;
}

}  // namespace cmcr::kern
