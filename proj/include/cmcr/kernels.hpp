// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the tensor library. Every kernel has a
// scalar reference implementation; on x86-64 an AVX2+FMA variant is selected
// at runtime when the CPU supports it. Set CMCR_KERNELS=scalar|avx2 to force
// a table (the equivalence tests do this).
//
// Elementwise kernels are lane-exact against the scalar reference. Reductions
// (dot, sum, gemm) may reassociate, so cross-table comparisons are tolerance
// based, while any fixed table is deterministic run to run.

namespace cmcr::kern {

struct KernelsF32 {
  void (*add)(const float* a, const float* b, float* o, size_t n);
  void (*sub)(const float* a, const float* b, float* o, size_t n);
  void (*mul)(const float* a, const float* b, float* o, size_t n);
  void (*axpy)(float alpha, const float* x, float* y, size_t n);
  void (*scale)(float alpha, const float* x, float* o, size_t n);
  float (*dot)(const float* a, const float* b, size_t n);
  float (*sum)(const float* a, size_t n);
  float (*max)(const float* a, size_t n);
  // Row-major C[M,N] = A[M,K] * B[K,N], optionally accumulating into C.
  void (*gemm)(size_t m, size_t n, size_t k, const float* a, size_t lda,
               const float* b, size_t ldb, bool accumulate, float* c,
               size_t ldc);
  // Fused Adam update: p -= lr * (m/bc1) / (sqrt(v/bc2) + eps).
  void (*adam)(float* p, const float* g, float* m, float* v, size_t n,
               float lr, float beta1, float beta2, float eps, float bc1,
               float bc2);
};

struct KernelsF64 {
  void (*add)(const double* a, const double* b, double* o, size_t n);
  void (*sub)(const double* a, const double* b, double* o, size_t n);
  void (*mul)(const double* a, const double* b, double* o, size_t n);
  void (*axpy)(double alpha, const double* x, double* y, size_t n);
  void (*scale)(double alpha, const double* x, double* o, size_t n);
  double (*dot)(const double* a, const double* b, size_t n);
  double (*sum)(const double* a, size_t n);
  double (*max)(const double* a, size_t n);
  void (*gemm)(size_t m, size_t n, size_t k, const double* a, size_t lda,
               const double* b, size_t ldb, bool accumulate, double* c,
               size_t ldc);
  void (*adam)(double* p, const double* g, double* m, double* v, size_t n,
               double lr, double beta1, double beta2, double eps, double bc1,
               double bc2);
};

struct Tables {
  KernelsF32 f32;
  KernelsF64 f64;
  const char* name;
};

const Tables& scalar_tables();
// nullptr when the binary lacks the AVX2 build or the CPU lacks AVX2+FMA.
const Tables* avx2_tables();
const Tables& active();
std::string active_name();

// Typed wrappers so templated tensor code does not branch on the dtype.
inline void add(const float* a, const float* b, float* o, size_t n) { active().f32.add(a, b, o, n); }
inline void add(const double* a, const double* b, double* o, size_t n) { active().f64.add(a, b, o, n); }
inline void sub(const float* a, const float* b, float* o, size_t n) { active().f32.sub(a, b, o, n); }
inline void sub(const double* a, const double* b, double* o, size_t n) { active().f64.sub(a, b, o, n); }
inline void mul(const float* a, const float* b, float* o, size_t n) { active().f32.mul(a, b, o, n); }
inline void mul(const double* a, const double* b, double* o, size_t n) { active().f64.mul(a, b, o, n); }
inline void axpy(float alpha, const float* x, float* y, size_t n) { active().f32.axpy(alpha, x, y, n); }
inline void axpy(double alpha, const double* x, double* y, size_t n) { active().f64.axpy(alpha, x, y, n); }
inline void scale(float alpha, const float* x, float* o, size_t n) { active().f32.scale(alpha, x, o, n); }
inline void scale(double alpha, const double* x, double* o, size_t n) { active().f64.scale(alpha, x, o, n); }
inline float dot(const float* a, const float* b, size_t n) { return active().f32.dot(a, b, n); }
inline double dot(const double* a, const double* b, size_t n) { return active().f64.dot(a, b, n); }
inline float sum(const float* a, size_t n) { return active().f32.sum(a, n); }
inline double sum(const double* a, size_t n) { return active().f64.sum(a, n); }
inline float max(const float* a, size_t n) { return active().f32.max(a, n); }
inline double max(const double* a, size_t n) { return active().f64.max(a, n); }
inline void gemm(size_t m, size_t n, size_t k, const float* a, size_t lda,
                 const float* b, size_t ldb, bool acc, float* c, size_t ldc) {
  active().f32.gemm(m, n, k, a, lda, b, ldb, acc, c, ldc);
}
inline void gemm(size_t m, size_t n, size_t k, const double* a, size_t lda,
                 const double* b, size_t ldb, bool acc, double* c, size_t ldc) {
  active().f64.gemm(m, n, k, a, lda, b, ldb, acc, c, ldc);
}
inline void adam(float* p, const float* g, float* m, float* v, size_t n,
                 float lr, float b1, float b2, float eps, float bc1, float bc2) {
  active().f32.adam(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2);
}
inline void adam(double* p, const double* g, double* m, double* v, size_t n,
                 double lr, double b1, double b2, double eps, double bc1, double bc2) {
  active().f64.adam(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2);
}

}  // namespace cmcr::kern
