#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cmcr/data/mixer.hpp"
#include "cmcr/metrics/metrics.hpp"
#include "testutil.hpp"

using namespace cmcr;
using dsp::Waveform;

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform from_vec(std::vector<float> v, int sr = 16000) {
  Waveform w;
  w.sample_rate = sr;
  w.samples = std::move(v);
  return w;
}

// Speech-like test material: a synthetic harmonic voice.
Waveform speechish(double seconds, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return data::synth_clean(seconds, rng);
}

// Independent 64-bit frame loop, structured differently from the library
// implementation (explicit frame extraction, clipping applied at the end).
double ssnr_oracle(const Waveform& clean, const Waveform& test) {
  const size_t frames = clean.samples.size() / 256;
  std::vector<double> vals;
  for (size_t m = 0; m < frames; ++m) {
    std::vector<double> c(clean.samples.begin() + m * 256,
                          clean.samples.begin() + (m + 1) * 256);
    std::vector<double> t(test.samples.begin() + m * 256,
                          test.samples.begin() + (m + 1) * 256);
    double pc = 0, pe = 0;
    for (size_t i = 0; i < 256; ++i) {
      pc += c[i] * c[i];
      pe += (c[i] - t[i]) * (c[i] - t[i]);
    }
    if (pc == 0.0) continue;
    double v = pe == 0.0 ? 1e9 : 10.0 * std::log10(pc / pe);
    v = std::min(35.0, std::max(-10.0, v));
    vals.push_back(v);
  }
  double acc = 0;
  for (double v : vals) acc += v;
  return acc / static_cast<double>(vals.size());
}

}  // namespace

TEST_CASE("ssnr of a signal with itself clips at 35 dB") {
  auto c = speechish(0.5, 1);
  CHECK(metrics::ssnr_db(c, c) == 35.0);
}

TEST_CASE("ssnr is 0 dB for equal-power-per-frame error") {
  // error = clean circular-shifted inside each frame has equal frame power
  auto c = speechish(0.5, 2);
  Waveform t = c;
  const size_t frames = c.samples.size() / 256;
  for (size_t m = 0; m < frames; ++m)
    for (size_t i = 0; i < 256; ++i)
      t.samples[m * 256 + i] =
          c.samples[m * 256 + i] + c.samples[m * 256 + (i + 128) % 256];
  // per-frame error power equals per-frame clean power by construction
  CHECK(std::abs(metrics::ssnr_db(c, t)) < 1e-6);
}

TEST_CASE("ssnr matches the independent oracle") {
  auto c = speechish(1.0, 3);
  Waveform t = c;
  std::mt19937_64 rng(4);
  std::normal_distribution<float> g(0.0f, 0.02f);
  for (auto& s : t.samples) s += g(rng);
  CHECK(std::abs(metrics::ssnr_db(c, t) - ssnr_oracle(c, t)) < 1e-6);
}

TEST_CASE("ssnr rejects all-silent clean and length mismatch") {
  auto z = from_vec(std::vector<float>(1024, 0.0f));
  auto t = from_vec(testutil::random_vecf(1024, 5));
  CHECK_THROWS_WITH_AS(static_cast<void>(metrics::ssnr_db(z, t)),
                       doctest::Contains("silent"), std::runtime_error);
  auto shorter = from_vec(testutil::random_vecf(512, 6));
  CHECK_THROWS(static_cast<void>(metrics::ssnr_db(t, shorter)));
}

TEST_CASE("ssnr is scale-invariant when both signals scale together") {
  auto c = speechish(0.5, 7);
  Waveform t = c;
  std::mt19937_64 rng(8);
  std::normal_distribution<float> g(0.0f, 0.05f);
  for (auto& s : t.samples) s += g(rng);
  const double base = metrics::ssnr_db(c, t);
  Waveform c2 = c, t2 = t;
  for (auto& s : c2.samples) s *= 0.125f;
  for (auto& s : t2.samples) s *= 0.125f;
  CHECK(metrics::ssnr_db(c2, t2) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("stoi of a signal with itself is 1") {
  auto c = speechish(1.0, 11);
  CHECK(metrics::stoi_score(c, c) >= 0.999);
}

TEST_CASE("stoi is invariant to polarity flip") {
  auto c = speechish(1.0, 12);
  Waveform t = c;
  for (auto& s : t.samples) s = -s;
  CHECK(metrics::stoi_score(c, t) >= 0.999);
}

TEST_CASE("stoi of independent white noise against speech is low") {
  auto c = speechish(1.0, 13);
  auto n = from_vec(testutil::random_vecf(c.samples.size(), 14, -0.3f, 0.3f));
  const double s = metrics::stoi_score(c, n);
  CHECK(s >= 0.0);
  CHECK(s < 0.2);
}

TEST_CASE("stoi rejects too-short input") {
  auto c = speechish(0.3, 15);
  CHECK_THROWS_WITH_AS(static_cast<void>(metrics::stoi_score(c, c)),
                       doctest::Contains("384 ms"), std::runtime_error);
}

TEST_CASE("stoi stays in [0,1] and degrades with SNR") {
  auto c = speechish(1.0, 16);
  std::mt19937_64 rng(17);
  auto noise = data::synth_noise(1.0, rng);
  double prev = -1.0;
  for (double snr : {-5.0, 0.0, 10.0}) {
    auto fitted = data::fit_noise(noise, c.samples.size(), rng);
    auto [noisy, gain] = data::mix_at_snr(c, fitted, snr);
    (void)gain;
    const double s = metrics::stoi_score(c, noisy);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    CHECK(s >= prev);  // monotone up the sweep
    prev = s;
  }
}

TEST_CASE("stoi: a tone at 1 kHz against itself through a resample is stable") {
  // exercises the 16k -> 10k path end to end
  std::vector<float> v(16000);
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = 0.4f * static_cast<float>(std::sin(2.0 * kPi * 220.0 * i / 16000.0) +
                                     0.3 * std::sin(2.0 * kPi * 440.0 * i / 16000.0));
  auto c = from_vec(v);
  CHECK(metrics::stoi_score(c, c) >= 0.999);
}

TEST_CASE("eval report aggregation and serialization") {
  testutil::TempDir td("report");
  metrics::EvalReport r;
  r.files.push_back({"a.wav", 10.0, 0.8});
  r.files.push_back({"b.wav", 20.0, 0.6});
  r.finalize();
  CHECK(r.mean_ssnr == doctest::Approx(15.0));
  CHECK(r.mean_stoi == doctest::Approx(0.7));
  metrics::write_report(r, td.file("report.jsonl"));
  std::ifstream f(td.file("report.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) ++lines;
  CHECK(lines == 3);  // two files + summary
  const std::string table = metrics::format_summary(r);
  CHECK(table.find("a.wav") != std::string::npos);
  CHECK(table.find("mean") != std::string::npos);
}
