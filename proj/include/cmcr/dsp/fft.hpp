// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "cmcr/common.hpp"

namespace cmcr::dsp {

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 transform.
//   sign = -1: A_k = sum_n a_n e^{-2*pi*i*k*n/N}   (forward)
//   sign = +1: A_n = sum_k a_k e^{+2*pi*i*k*n/N}   (inverse, unnormalized)
// Twiddles are computed in double regardless of T.
template <class T>
void fft(std::complex<T>* a, size_t n, int sign) {
  require(is_pow2(n), "fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<T> wlen(static_cast<T>(std::cos(ang)),
                               static_cast<T>(std::sin(ang)));
    for (size_t i = 0; i < n; i += len) {
      std::complex<T> w(1, 0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<T> u = a[i + j];
        const std::complex<T> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

// DFT of a real signal (zero-padded to n); writes bins 0..n/2 as (re, im)
// pairs into out[2*(n/2+1)].
template <class T>
void rdft(const T* x, size_t n_in, size_t n, T* out) {
  std::vector<std::complex<T>> buf(n, std::complex<T>(0, 0));
  for (size_t i = 0; i < n_in && i < n; ++i) buf[i] = std::complex<T>(x[i], 0);
  fft(buf.data(), n, -1);
  const size_t bins = n / 2 + 1;
  for (size_t k = 0; k < bins; ++k) {
    out[2 * k] = buf[k].real();
    out[2 * k + 1] = buf[k].imag();
  }
}

// Inverse of rdft under Hermitian extension; imaginary parts of bins 0 and
// n/2 have no effect. spec holds (re, im) pairs for bins 0..n/2.
template <class T>
void irdft(const T* spec, size_t n, T* out) {
  const size_t bins = n / 2 + 1;
  std::vector<std::complex<T>> buf(n);
  buf[0] = std::complex<T>(spec[0], 0);
  buf[n / 2] = std::complex<T>(spec[2 * (n / 2)], 0);
  for (size_t k = 1; k < n / 2; ++k) {
    buf[k] = std::complex<T>(spec[2 * k], spec[2 * k + 1]);
    buf[n - k] = std::conj(buf[k]);
  }
  fft(buf.data(), n, +1);
  const T inv = T(1) / static_cast<T>(n);
  for (size_t i = 0; i < n; ++i) out[i] = buf[i].real() * inv;
  (void)bins;
}

// Adjoint of irdft as a map R^{2*(n/2+1)} -> R^n:
//   g_spec[k] = (c_k / n) * DFT(g)[k], c_k = 1 at k in {0, n/2} else 2,
// with the imaginary components of bins 0 and n/2 fixed at zero.
template <class T>
void irdft_adjoint(const T* gout, size_t n, T* gspec) {
  std::vector<std::complex<T>> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = std::complex<T>(gout[i], 0);
  fft(buf.data(), n, -1);
  const T inv = T(1) / static_cast<T>(n);
  const size_t half = n / 2;
  for (size_t k = 0; k <= half; ++k) {
    const T ck = (k == 0 || k == half) ? T(1) : T(2);
    gspec[2 * k] = ck * inv * buf[k].real();
    gspec[2 * k + 1] = (k == 0 || k == half) ? T(0) : ck * inv * buf[k].imag();
  }
}

// Adjoint of rdft as a map R^{n_in} -> R^{2*(n/2+1)}:
//   g_x[m] = Re( sum_{k<=n/2} (g_re[k] + i*g_im[k]) e^{+2*pi*i*k*m/n} ).
template <class T>
void rdft_adjoint(const T* gspec, size_t n_in, size_t n, T* gx) {
  std::vector<std::complex<T>> buf(n, std::complex<T>(0, 0));
  const size_t half = n / 2;
  for (size_t k = 0; k <= half; ++k)
    buf[k] = std::complex<T>(gspec[2 * k], gspec[2 * k + 1]);
  fft(buf.data(), n, +1);
  for (size_t m = 0; m < n_in && m < n; ++m) gx[m] = buf[m].real();
}

}  // namespace cmcr::dsp
