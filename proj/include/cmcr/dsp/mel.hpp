// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <vector>

#include "cmcr/common.hpp"

namespace cmcr::dsp {

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular HTK-style filters over [fmin, fmax], sampled on the rdft bin
// grid. Returns a row-major [n_mels, n_bins] matrix; peaks are 1.
template <class T>
std::vector<T> mel_filterbank(int n_mels, int n_bins, int sample_rate,
                              double fmin = 0.0, double fmax = 8000.0) {
  require(n_mels >= 1 && n_bins >= 2, "mel: bad filterbank size");
  require(fmax > fmin && fmax <= sample_rate / 2.0 + 1e-9,
          "mel: fmax must lie within Nyquist");
  const int fft_size = 2 * (n_bins - 1);
  std::vector<double> edges(n_mels + 2);
  const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[i] = mel_to_hz(mlo + (mhi - mlo) * i / (n_mels + 1));

  std::vector<T> fb(static_cast<size_t>(n_mels) * n_bins, T(0));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double v = 0.0;
      if (f > lo && f < hi)
        v = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb[static_cast<size_t>(m) * n_bins + k] = static_cast<T>(v);
    }
  }
  return fb;
}

}  // namespace cmcr::dsp
