#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cmcr/kernels.hpp"
#include "testutil.hpp"

using namespace cmcr;

namespace {

// Naive triple loop, independent of the kernel implementations.
template <class T>
void gemm_naive(size_t m, size_t n, size_t k, const std::vector<T>& a,
                const std::vector<T>& b, bool acc, std::vector<T>& c) {
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      double s = acc ? c[i * n + j] : 0.0;
      for (size_t p = 0; p < k; ++p)
        s += static_cast<double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<T>(s);
    }
}

}  // namespace

TEST_CASE("scalar gemm matches naive reference") {
  const auto& t = kern::scalar_tables();
  for (auto [m, n, k] : {std::tuple<size_t, size_t, size_t>{1, 1, 1},
                         {3, 5, 7},
                         {6, 16, 12},
                         {7, 33, 19},
                         {13, 41, 6}}) {
    auto a = testutil::random_vecf(m * k, 1000 + m);
    auto b = testutil::random_vecf(k * n, 2000 + n);
    std::vector<float> c(m * n, 0.5f), ref(m * n, 0.5f);
    t.f32.gemm(m, n, k, a.data(), k, b.data(), n, true, c.data(), n);
    gemm_naive(m, n, k, a, b, true, ref);
    for (size_t i = 0; i < c.size(); ++i)
      CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-4));
  }
}

TEST_CASE("avx2 tables agree with scalar tables") {
  const kern::Tables* avx = kern::avx2_tables();
  if (!avx) {
    MESSAGE("AVX2 unavailable on this host; dispatch falls back to scalar");
    CHECK(kern::active_name() == "scalar");
    return;
  }
  const auto& ref = kern::scalar_tables();
  for (size_t n : {1u, 7u, 8u, 9u, 31u, 64u, 1000u, 4097u}) {
    auto a = testutil::random_vecf(n, 10 + n);
    auto b = testutil::random_vecf(n, 20 + n);
    std::vector<float> o1(n), o2(n);

    // Elementwise kernels are lane-exact: bitwise equality.
    avx->f32.add(a.data(), b.data(), o1.data(), n);
    ref.f32.add(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
    avx->f32.sub(a.data(), b.data(), o1.data(), n);
    ref.f32.sub(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
    avx->f32.mul(a.data(), b.data(), o1.data(), n);
    ref.f32.mul(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
    avx->f32.scale(0.37f, a.data(), o1.data(), n);
    ref.f32.scale(0.37f, a.data(), o2.data(), n);
    CHECK(o1 == o2);

    // Reductions reassociate: tolerance comparison.
    CHECK(avx->f32.dot(a.data(), b.data(), n) ==
          doctest::Approx(ref.f32.dot(a.data(), b.data(), n)).epsilon(1e-4));
    CHECK(avx->f32.sum(a.data(), n) ==
          doctest::Approx(ref.f32.sum(a.data(), n)).epsilon(1e-4));
    CHECK(avx->f32.max(a.data(), n) == ref.f32.max(a.data(), n));

    std::vector<double> ad(a.begin(), a.end()), bd(b.begin(), b.end());
    std::vector<double> od1(n), od2(n);
    avx->f64.add(ad.data(), bd.data(), od1.data(), n);
    ref.f64.add(ad.data(), bd.data(), od2.data(), n);
    CHECK(od1 == od2);
    CHECK(avx->f64.dot(ad.data(), bd.data(), n) ==
          doctest::Approx(ref.f64.dot(ad.data(), bd.data(), n)).epsilon(1e-12));
  }

  for (auto [m, n, k] : {std::tuple<size_t, size_t, size_t>{1, 17, 61},
                         {6, 16, 12},
                         {8, 1037, 96},
                         {13, 130, 48},
                         {17, 17, 61}}) {
    auto a = testutil::random_vecf(m * k, 5000 + m);
    auto b = testutil::random_vecf(k * n, 6000 + n);
    std::vector<float> c1(m * n, 0.0f), c2(m * n, 0.0f);
    avx->f32.gemm(m, n, k, a.data(), k, b.data(), n, false, c1.data(), n);
    ref.f32.gemm(m, n, k, a.data(), k, b.data(), n, false, c2.data(), n);
    double worst = 0;
    for (size_t i = 0; i < c1.size(); ++i)
      worst = std::max(worst, std::abs(double(c1[i]) - c2[i]) /
                                  std::max(1.0, std::abs(double(c2[i]))));
    CHECK(worst < 1e-5);
  }

  // Fused Adam update; both paths start from the same state.
  const size_t n = 133;
  auto g = testutil::random_vecf(n, 42);
  std::vector<float> p1(n, 1.0f), m1(n, 0.1f), v1(n, 0.2f);
  std::vector<float> p2 = p1, m2 = m1, v2 = v1;
  avx->f32.adam(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3f, 0.9f,
                0.999f, 1e-8f, 0.5f, 0.25f);
  ref.f32.adam(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-3f, 0.9f,
               0.999f, 1e-8f, 0.5f, 0.25f);
  for (size_t i = 0; i < n; ++i) {
    CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-6));
    CHECK(m1[i] == doctest::Approx(m2[i]).epsilon(1e-6));
    CHECK(v1[i] == doctest::Approx(v2[i]).epsilon(1e-6));
  }
}

TEST_CASE("axpy accumulates in place") {
  const auto& t = kern::active();
  std::vector<float> y(37, 1.0f);
  auto x = testutil::random_vecf(37, 7);
  t.f32.axpy(2.0f, x.data(), y.data(), 37);
  for (size_t i = 0; i < y.size(); ++i)
    CHECK(y[i] == doctest::Approx(1.0f + 2.0f * x[i]));
}

TEST_CASE("max handles empty input") {
  const auto& t = kern::active();
  CHECK(std::isinf(t.f32.max(nullptr, 0)));
}
