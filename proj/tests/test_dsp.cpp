#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>

#include "cmcr/autograd/signal_ops.hpp"
#include "cmcr/dsp/fft.hpp"
#include "cmcr/dsp/mel.hpp"
#include "cmcr/dsp/stft.hpp"
#include "cmcr/dsp/wav.hpp"
#include "testutil.hpp"

using namespace cmcr;
using dsp::Waveform;

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform tone(double freq, int sr, double seconds, double amp = 0.5) {
  Waveform w;
  w.sample_rate = sr;
  const size_t n = static_cast<size_t>(std::llround(seconds * sr));
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(amp * std::sin(2.0 * kPi * freq * i / sr));
  return w;
}

Waveform random_wave(size_t n, uint64_t seed, int sr = 16000, float amp = 0.5f) {
  Waveform w;
  w.sample_rate = sr;
  auto v = testutil::random_vecf(n, seed, -amp, amp);
  w.samples = std::move(v);
  return w;
}

// DTFT magnitude at an arbitrary frequency; independent of the fft module.
double dtft_mag(const std::vector<float>& x, int sr, double freq) {
  double re = 0.0, im = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double ph = 2.0 * kPi * freq * static_cast<double>(i) / sr;
    re += x[i] * std::cos(ph);
    im -= x[i] * std::sin(ph);
  }
  return std::hypot(re, im);
}

// Fine scan for the spectral peak near `guess` to 0.01 Hz.
double peak_freq(const std::vector<float>& x, int sr, double guess) {
  double best_f = guess, best_m = -1.0;
  for (double f = guess - 5.0; f <= guess + 5.0; f += 0.01) {
    const double m = dtft_mag(x, sr, f);
    if (m > best_m) {
      best_m = m;
      best_f = f;
    }
  }
  return best_f;
}

double rms(const std::vector<float>& x, size_t lo, size_t hi) {
  double acc = 0.0;
  for (size_t i = lo; i < hi; ++i) acc += static_cast<double>(x[i]) * x[i];
  return std::sqrt(acc / static_cast<double>(hi - lo));
}

}  // namespace

TEST_CASE("fft matches a naive DFT") {
  const size_t n = 64;
  auto xs = testutil::random_vec(2 * n, 99);
  std::vector<std::complex<double>> a(n);
  for (size_t i = 0; i < n; ++i) a[i] = {xs[2 * i], xs[2 * i + 1]};
  auto b = a;
  dsp::fft(b.data(), n, -1);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> ref(0, 0);
    for (size_t m = 0; m < n; ++m)
      ref += a[m] * std::exp(std::complex<double>(0, -2.0 * kPi * k * m / n));
    CHECK(std::abs(b[k] - ref) < 1e-9);
  }
  // inverse round trip
  dsp::fft(b.data(), n, +1);
  for (size_t i = 0; i < n; ++i)
    CHECK(std::abs(b[i] / static_cast<double>(n) - a[i]) < 1e-12);
}

TEST_CASE("rdft/irdft round trip and adjoint identities") {
  const size_t n = 32;
  auto x = testutil::random_vec(n, 5);
  std::vector<double> spec(2 * (n / 2 + 1));
  dsp::rdft(x.data(), n, n, spec.data());
  std::vector<double> back(n);
  dsp::irdft(spec.data(), n, back.data());
  for (size_t i = 0; i < n; ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-12));

  // <A x, y> == <x, A^T y> for both adjoints
  auto y = testutil::random_vec(2 * (n / 2 + 1), 6);
  double lhs = 0;
  for (size_t i = 0; i < y.size(); ++i) lhs += spec[i] * y[i];
  std::vector<double> aty(n);
  dsp::rdft_adjoint(y.data(), n, n, aty.data());
  double rhs = 0;
  for (size_t i = 0; i < n; ++i) rhs += x[i] * aty[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));

  auto g = testutil::random_vec(n, 7);
  std::vector<double> z(n);
  dsp::irdft(y.data(), n, z.data());
  double lhs2 = 0;
  for (size_t i = 0; i < n; ++i) lhs2 += z[i] * g[i];
  std::vector<double> atg(2 * (n / 2 + 1));
  dsp::irdft_adjoint(g.data(), n, atg.data());
  // imaginary parts of bins 0 and n/2 do not reach the output, so restrict
  // the inner product to coordinates that do
  double rhs2 = 0;
  for (size_t k = 0; k <= n / 2; ++k) {
    rhs2 += y[2 * k] * atg[2 * k];
    if (k != 0 && k != n / 2) rhs2 += y[2 * k + 1] * atg[2 * k + 1];
  }
  CHECK(lhs2 == doctest::Approx(rhs2).epsilon(1e-10));
}

TEST_CASE("stft frame count and zero input") {
  dsp::StftConfig cfg;
  CHECK(dsp::stft_frames(16000, cfg) == 61);
  CHECK(dsp::stft_frames(400, cfg) == 1);
  CHECK_THROWS(dsp::stft_frames(399, cfg));

  std::vector<float> x(16000, 0.0f);
  std::vector<float> spec(61 * 257 * 2);
  dsp::stft_core(x.data(), 16000, cfg, spec.data());
  for (float v : spec) CHECK(v == 0.0f);
}

TEST_CASE("1 kHz tone concentrates at bin 32") {
  dsp::StftConfig cfg;
  auto w = tone(1000.0, 16000, 1.0);
  const int64_t frames = dsp::stft_frames(16000, cfg);
  std::vector<float> spec(frames * 257 * 2);
  dsp::stft_core(w.samples.data(), 16000, cfg, spec.data());
  // middle frame magnitude argmax
  const int64_t t = frames / 2;
  int best = -1;
  double best_m = -1;
  for (int k = 0; k < 257; ++k) {
    const double re = spec[(t * 257 + k) * 2], im = spec[(t * 257 + k) * 2 + 1];
    const double m = re * re + im * im;
    if (m > best_m) {
      best_m = m;
      best = k;
    }
  }
  CHECK(best == 32);  // 1000/16000*512
}

TEST_CASE("istft round trip: error below -50 dB away from the edges") {
  dsp::StftConfig cfg;
  auto w = random_wave(16000, 1234);
  const int64_t frames = dsp::stft_frames(16000, cfg);
  std::vector<float> spec(frames * 257 * 2);
  dsp::stft_core(w.samples.data(), 16000, cfg, spec.data());
  std::vector<float> back(16000);
  dsp::istft_core(spec.data(), frames, cfg, 16000, back.data());

  double err = 0.0, ref = 0.0;
  for (int i = cfg.win_len; i < 16000 - cfg.win_len; ++i) {
    const double d = back[i] - w.samples[i];
    err += d * d;
    ref += static_cast<double>(w.samples[i]) * w.samples[i];
  }
  const double db = 10.0 * std::log10(err / ref);
  CHECK(db < -50.0);
}

TEST_CASE("istft of zero spec is zero; istft is linear") {
  dsp::StftConfig cfg;
  const int64_t frames = 10;
  std::vector<float> zero(frames * 257 * 2, 0.0f);
  std::vector<float> out(4000);
  dsp::istft_core(zero.data(), frames, cfg, 4000, out.data());
  for (float v : out) CHECK(v == 0.0f);

  auto s1 = testutil::random_vecf(frames * 257 * 2, 1);
  auto s2 = testutil::random_vecf(frames * 257 * 2, 2);
  const float a = 0.7f, b = -1.3f;
  std::vector<float> mix(s1.size());
  for (size_t i = 0; i < s1.size(); ++i) mix[i] = a * s1[i] + b * s2[i];
  std::vector<float> o1(4000), o2(4000), om(4000);
  dsp::istft_core(s1.data(), frames, cfg, 4000, o1.data());
  dsp::istft_core(s2.data(), frames, cfg, 4000, o2.data());
  dsp::istft_core(mix.data(), frames, cfg, 4000, om.data());
  for (size_t i = 0; i < om.size(); ++i)
    CHECK(std::abs(om[i] - (a * o1[i] + b * o2[i])) < 1e-5);
}

TEST_CASE("parseval: spectrogram energy tracks windowed signal energy") {
  dsp::StftConfig cfg;
  auto w = random_wave(8000, 77);
  const int64_t frames = dsp::stft_frames(8000, cfg);
  std::vector<double> x(w.samples.begin(), w.samples.end());
  std::vector<double> spec(frames * 257 * 2);
  dsp::stft_core(x.data(), 8000, cfg, spec.data());

  double spec_e = 0.0;
  for (int64_t t = 0; t < frames; ++t)
    for (int k = 0; k < 257; ++k) {
      const double re = spec[(t * 257 + k) * 2], im = spec[(t * 257 + k) * 2 + 1];
      const double ck = (k == 0 || k == 256) ? 1.0 : 2.0;
      spec_e += ck * (re * re + im * im);
    }
  const auto win = dsp::hann_window<double>(cfg.win_len);
  double sig_e = 0.0;
  for (int64_t t = 0; t < frames; ++t)
    for (int i = 0; i < cfg.win_len; ++i) {
      const double v = win[i] * x[t * cfg.hop + i];
      sig_e += v * v;
    }
  CHECK(spec_e / (cfg.fft_size * sig_e) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("stft_op and istft_op pass finite-difference gradient checks") {
  dsp::StftConfig tiny;
  tiny.win_len = 8;
  tiny.hop = 4;
  tiny.fft_size = 8;

  SUBCASE("stft") {
    std::vector<Tensor<double>> leaves = {
        Tensor<double>::from({20}, testutil::random_vec(20, 3))};
    auto wmask = Tensor<double>::from({2, 4, 5}, testutil::random_vec(40, 4));
    auto r = testutil::grad_check(leaves, [&] {
      return mean_all(mul(stft_op(leaves[0], tiny), wmask));
    });
    CHECK(r.max_rel_err < 1e-6);
  }

  SUBCASE("istft") {
    std::vector<Tensor<double>> leaves = {
        Tensor<double>::from({2, 4, 5}, testutil::random_vec(40, 5))};
    auto wmask = Tensor<double>::from({18}, testutil::random_vec(18, 6));
    auto r = testutil::grad_check(leaves, [&] {
      return mean_all(mul(istft_op(leaves[0], tiny, 18), wmask));
    });
    CHECK(r.max_rel_err < 1e-6);
  }
}

TEST_CASE("wav round trip within PCM16 quantization") {
  testutil::TempDir td("wav");
  auto w = random_wave(16000, 55, 16000, 0.9f);
  dsp::save_wav(td.file("a.wav"), w);
  auto r = dsp::load_wav(td.file("a.wav"));
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.samples.size() == w.samples.size());
  float maxdiff = 0.0f;
  for (size_t i = 0; i < w.samples.size(); ++i)
    maxdiff = std::max(maxdiff, std::abs(w.samples[i] - r.samples[i]));
  CHECK(maxdiff <= std::pow(2.0f, -15.0f));
}

TEST_CASE("wav error paths") {
  testutil::TempDir td("wavbad");
  {
    std::ofstream f(td.file("garbage.wav"), std::ios::binary);
    f << "this is not a riff file at all, padded to be long enough .....";
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(dsp::load_wav(td.file("garbage.wav"))),
                       doctest::Contains("not a RIFF/WAVE"), std::runtime_error);

  CHECK_THROWS(static_cast<void>(dsp::load_wav(td.file("missing.wav"))));

  // header says float64: unsupported codec
  Waveform w = tone(440, 16000, 0.1);
  dsp::save_wav(td.file("ok.wav"), w);
  auto bytes = [&] {
    std::ifstream f(td.file("ok.wav"), std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  }();
  bytes[34] = 64;  // bits per sample
  {
    std::ofstream f(td.file("bad_bits.wav"), std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(dsp::load_wav(td.file("bad_bits.wav"))),
                       doctest::Contains("unsupported codec"), std::runtime_error);

  // zero-length data chunk
  Waveform empty;
  empty.sample_rate = 16000;
  CHECK_THROWS(dsp::save_wav(td.file("empty.wav"), empty));
}

TEST_CASE("stereo wav is averaged to mono") {
  testutil::TempDir td("wavst");
  // hand-build a 2-channel PCM16 file: L = 0.5, R = -0.25
  std::vector<uint8_t> b;
  auto u16 = [&](uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back(v >> 8);
  };
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
  };
  const int n = 64;
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  u32(36 + n * 4);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  u32(16);
  u16(1);
  u16(2);
  u32(16000);
  u32(16000 * 4);
  u16(4);
  u16(16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  u32(n * 4);
  for (int i = 0; i < n; ++i) {
    u16(static_cast<uint16_t>(int16_t(16384)));
    u16(static_cast<uint16_t>(int16_t(-8192)));
  }
  {
    std::ofstream f(td.file("st.wav"), std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }
  auto w = dsp::load_wav(td.file("st.wav"));
  REQUIRE(w.samples.size() == static_cast<size_t>(n));
  for (float s : w.samples) CHECK(s == doctest::Approx((0.5 - 0.25) / 2).epsilon(1e-3));
}

TEST_CASE("resample: same rate is identity") {
  auto w = random_wave(1000, 8);
  auto r = dsp::resample(w, 16000);
  CHECK(r.samples == w.samples);
}

TEST_CASE("resample 48k->16k preserves a 440 Hz tone") {
  auto w = tone(440.0, 48000, 1.0);
  auto r = dsp::resample(w, 16000);
  CHECK(r.sample_rate == 16000);
  CHECK(std::abs(static_cast<double>(r.samples.size()) - 16000.0) <= 1.0);

  std::vector<float> mid(r.samples.begin() + 1000, r.samples.end() - 1000);
  const double f = peak_freq(mid, 16000, 440.0);
  CHECK(std::abs(f - 440.0) <= 0.1);

  // amplitude within 1%
  const double rms_in = rms(w.samples, 2000, w.samples.size() - 2000);
  const double rms_out = rms(r.samples, 1000, r.samples.size() - 1000);
  CHECK(rms_out / rms_in == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("resample rejects nothing above Nyquist but attenuates >= 60 dB") {
  // white noise restricted to >8 kHz at 48 kHz: construct in the frequency
  // domain, then resample and compare energies
  const size_t n = 1 << 16;
  std::vector<std::complex<double>> spec(n, {0, 0});
  std::mt19937_64 rng(9001);
  std::normal_distribution<double> g(0, 1);
  for (size_t k = 0; k < n / 2; ++k) {
    const double f = static_cast<double>(k) * 48000.0 / n;
    if (f > 8200.0 && f < 23000.0) {
      spec[k] = {g(rng), g(rng)};
      spec[n - k] = std::conj(spec[k]);
    }
  }
  dsp::fft(spec.data(), n, +1);
  Waveform w;
  w.sample_rate = 48000;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = static_cast<float>(spec[i].real() / n);
  const double in_rms = rms(w.samples, 0, w.samples.size());

  auto r = dsp::resample(w, 16000);
  const double out_rms = rms(r.samples, 200, r.samples.size() - 200);
  CHECK(out_rms < in_rms * 1e-3);  // >= 60 dB down
}

TEST_CASE("44.1 kHz ingestion resamples to 16 kHz") {
  testutil::TempDir td("ingest");
  auto w = tone(440.0, 44100, 1.0);
  dsp::save_wav(td.file("t.wav"), w);
  auto r = dsp::ingest_wav(td.file("t.wav"));
  CHECK(r.sample_rate == 16000);
  CHECK(std::abs(static_cast<double>(r.samples.size()) - 16000.0) <= 1.0);
  std::vector<float> mid(r.samples.begin() + 1000, r.samples.end() - 1000);
  CHECK(std::abs(peak_freq(mid, 16000, 440.0) - 440.0) <= 0.1);
}

TEST_CASE("mel filterbank construction properties") {
  auto fb = dsp::mel_filterbank<double>(40, 257, 16000);
  int prev_peak = -1;
  for (int m = 0; m < 40; ++m) {
    double row_sum = 0.0;
    int peak = 0;
    double peak_v = -1.0;
    for (int k = 0; k < 257; ++k) {
      const double v = fb[m * 257 + k];
      row_sum += v;
      if (v > peak_v) {
        peak_v = v;
        peak = k;
      }
    }
    CHECK(row_sum > 0.0);
    CHECK(peak > prev_peak);
    prev_peak = peak;
  }
}

TEST_CASE("log_mel: silence and 1 kHz tone band") {
  dsp::StftConfig cfg;
  auto silent = Tensor<float>::zeros({16000});
  auto lm = log_mel(silent, cfg);
  CHECK(lm.dim(0) == 61);
  CHECK(lm.dim(1) == 40);
  for (int64_t i = 0; i < lm.numel(); ++i)
    CHECK(lm.data()[i] == doctest::Approx(std::log(1e-8f)).epsilon(1e-5));

  auto w = tone(1000.0, 16000, 1.0);
  auto lmt = log_mel(wave_tensor<float>(w), cfg);
  // argmax band vs the band whose center is nearest 1 kHz (mel-scale oracle)
  const double mlo = dsp::hz_to_mel(0.0), mhi = dsp::hz_to_mel(8000.0);
  int expect = 0;
  double best = 1e9;
  for (int m = 0; m < 40; ++m) {
    const double center = dsp::mel_to_hz(mlo + (mhi - mlo) * (m + 1) / 41.0);
    if (std::abs(center - 1000.0) < best) {
      best = std::abs(center - 1000.0);
      expect = m;
    }
  }
  const int64_t t = 30;
  int got = 0;
  float got_v = -1e30f;
  for (int m = 0; m < 40; ++m) {
    const float v = lmt.data()[t * 40 + m];
    if (v > got_v) {
      got_v = v;
      got = m;
    }
  }
  CHECK(got == expect);
}

TEST_CASE("log_mel gradient flows into the waveform") {
  dsp::StftConfig tiny;
  tiny.win_len = 8;
  tiny.hop = 4;
  tiny.fft_size = 8;
  std::vector<Tensor<double>> leaves = {
      Tensor<double>::from({24}, testutil::random_vec(24, 12, 0.1, 0.9))};
  auto r = testutil::grad_check(leaves, [&] {
    return mean_all(log_mel(leaves[0], tiny, 6, 16000));
  });
  CHECK(r.max_rel_err < 1e-6);
}
