// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>
#include <cstdint>

#include "cmcr/common.hpp"
#include "cmcr/dsp/wav.hpp"

namespace cmcr::dsp {

namespace {

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

double sinc(double u) {
  if (std::abs(u) < 1e-12) return 1.0;
  const double p = 3.14159265358979323846 * u;
  return std::sin(p) / p;
}

}  // namespace

Waveform resample(const Waveform& w, int target_hz) {
  require(w.sample_rate > 0, "resample: source rate must be positive");
  require(target_hz > 0, "resample: target rate must be positive");
  if (target_hz == w.sample_rate) return w;
  require(!w.samples.empty(), "resample: empty input");

  const double ratio = static_cast<double>(target_hz) / w.sample_rate;
  const int64_t n = static_cast<int64_t>(w.samples.size());
  const int64_t out_len = std::llround(static_cast<double>(n) * ratio);

  // Kaiser-windowed sinc, 32 zero crossings per side; cutoff sits at 94.5%
  // of the narrower Nyquist so aliased content stays ~90 dB down.
  const double fc = 0.4725 * std::min(1.0, ratio);
  const int half = static_cast<int>(std::ceil(32.0 / (2.0 * fc)));
  const double beta = 9.0;
  const double i0b = bessel_i0(beta);

  Waveform out;
  out.sample_rate = target_hz;
  out.samples.resize(static_cast<size_t>(out_len));
  for (int64_t j = 0; j < out_len; ++j) {
    const double tau = static_cast<double>(j) / ratio;
    const int64_t i0 = std::max<int64_t>(0, static_cast<int64_t>(std::ceil(tau)) - half);
    const int64_t i1 = std::min<int64_t>(n - 1, static_cast<int64_t>(std::floor(tau)) + half);
    double acc = 0.0;
    for (int64_t i = i0; i <= i1; ++i) {
      const double t = tau - static_cast<double>(i);
      const double u = t / half;
      const double win = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - u * u))) / i0b;
      acc += static_cast<double>(w.samples[static_cast<size_t>(i)]) * 2.0 * fc *
             sinc(2.0 * fc * t) * win;
    }
    out.samples[static_cast<size_t>(j)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace cmcr::dsp
