// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cmcr/common.hpp"
#include "cmcr/dsp/fft.hpp"

namespace cmcr::dsp {

// Analysis grid: 25 ms Hann window at 16 kHz, hop 256, FFT 512. Frames are
// taken without center padding: T = 1 + floor((N - win_len) / hop).
struct StftConfig {
  int win_len = 400;
  int hop = 256;
  int fft_size = 512;

  int bins() const { return fft_size / 2 + 1; }
  void validate() const {
    require(hop > 0 && hop < win_len && win_len <= fft_size,
            "stft: need 0 < hop < win_len <= fft_size");
    require(is_pow2(static_cast<size_t>(fft_size)), "stft: fft_size must be a power of two");
  }
};

template <class T>
std::vector<T> hann_window(int len) {
  std::vector<T> w(len);
  for (int n = 0; n < len; ++n)
    w[n] = static_cast<T>(
        0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * n / len));
  return w;
}

inline int64_t stft_frames(int64_t n_samples, const StftConfig& cfg) {
  require(n_samples >= cfg.win_len,
          "stft: signal shorter than the analysis window (" +
              std::to_string(n_samples) + " < " + std::to_string(cfg.win_len) + ")");
  return 1 + (n_samples - cfg.win_len) / cfg.hop;
}

// out: [frames, bins, 2] row-major.
template <class T>
void stft_core(const T* x, int64_t n_samples, const StftConfig& cfg, T* out) {
  cfg.validate();
  const int64_t frames = stft_frames(n_samples, cfg);
  const auto w = hann_window<T>(cfg.win_len);
  std::vector<T> buf(cfg.win_len);
  const int64_t bins = cfg.bins();
  for (int64_t t = 0; t < frames; ++t) {
    const T* frame = x + t * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i) buf[i] = frame[i] * w[i];
    rdft(buf.data(), static_cast<size_t>(cfg.win_len),
         static_cast<size_t>(cfg.fft_size), out + t * bins * 2);
  }
}

// Adjoint of stft_core: accumulates into gx (caller zero-fills).
template <class T>
void stft_adjoint(const T* gspec, int64_t frames, const StftConfig& cfg,
                  int64_t n_samples, T* gx) {
  const auto w = hann_window<T>(cfg.win_len);
  const int64_t bins = cfg.bins();
  std::vector<T> gframe(cfg.win_len);
  for (int64_t t = 0; t < frames; ++t) {
    rdft_adjoint(gspec + t * bins * 2, static_cast<size_t>(cfg.win_len),
                 static_cast<size_t>(cfg.fft_size), gframe.data());
    T* dst = gx + t * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i) dst[i] += w[i] * gframe[i];
  }
  (void)n_samples;
}

// Sum of squared synthesis windows at each output sample. Hann at hop 256
// under a 400-sample window is not constant-overlap-add, so the inverse
// divides by this (floored: extreme edges stay bounded and the operator
// stays linear).
template <class T>
std::vector<T> ola_norm(int64_t frames, int64_t out_len, const StftConfig& cfg) {
  const auto w = hann_window<T>(cfg.win_len);
  std::vector<T> den(out_len, T(0));
  for (int64_t t = 0; t < frames; ++t)
    for (int i = 0; i < cfg.win_len; ++i) {
      const int64_t m = t * cfg.hop + i;
      if (m < out_len) den[m] += w[i] * w[i];
    }
  return den;
}

inline constexpr double kOlaFloor = 1e-2;

// Weighted overlap-add inverse; spec: [frames, bins, 2]. Linear in spec.
template <class T>
void istft_core(const T* spec, int64_t frames, const StftConfig& cfg,
                int64_t out_len, T* out) {
  cfg.validate();
  require(frames >= 1, "istft: no frames");
  require(out_len >= 0, "istft: bad output length");
  const auto w = hann_window<T>(cfg.win_len);
  const int64_t bins = cfg.bins();
  std::vector<T> num(out_len, T(0));
  std::vector<T> frame(cfg.fft_size);
  for (int64_t t = 0; t < frames; ++t) {
    irdft(spec + t * bins * 2, static_cast<size_t>(cfg.fft_size), frame.data());
    const int64_t base = t * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i) {
      const int64_t m = base + i;
      if (m < out_len) num[m] += w[i] * frame[i];
    }
  }
  const auto den = ola_norm<T>(frames, out_len, cfg);
  for (int64_t m = 0; m < out_len; ++m) {
    const T d = den[m] > static_cast<T>(kOlaFloor) ? den[m] : static_cast<T>(kOlaFloor);
    out[m] = den[m] == T(0) ? T(0) : num[m] / d;
  }
}

// Adjoint of istft_core: accumulates into gspec (caller zero-fills).
template <class T>
void istft_adjoint(const T* gout, int64_t out_len, const StftConfig& cfg,
                   int64_t frames, T* gspec) {
  const auto w = hann_window<T>(cfg.win_len);
  const auto den = ola_norm<T>(frames, out_len, cfg);
  const int64_t bins = cfg.bins();
  std::vector<T> gnum(out_len);
  for (int64_t m = 0; m < out_len; ++m) {
    const T d = den[m] > static_cast<T>(kOlaFloor) ? den[m] : static_cast<T>(kOlaFloor);
    gnum[m] = den[m] == T(0) ? T(0) : gout[m] / d;
  }
  std::vector<T> gframe(cfg.fft_size);
  std::vector<T> gbin(bins * 2);
  for (int64_t t = 0; t < frames; ++t) {
    std::fill(gframe.begin(), gframe.end(), T(0));
    const int64_t base = t * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i) {
      const int64_t m = base + i;
      if (m < out_len) gframe[i] = w[i] * gnum[m];
    }
    irdft_adjoint(gframe.data(), static_cast<size_t>(cfg.fft_size), gbin.data());
    T* dst = gspec + t * bins * 2;
    for (int64_t k = 0; k < bins * 2; ++k) dst[k] += gbin[k];
  }
}

}  // namespace cmcr::dsp
