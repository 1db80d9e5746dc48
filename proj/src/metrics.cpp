// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cmcr/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "cmcr/common.hpp"
#include "cmcr/dsp/fft.hpp"
#include "cmcr/dsp/stft.hpp"

namespace cmcr::metrics {

using dsp::Waveform;

double ssnr_db(const Waveform& clean, const Waveform& test) {
  require(clean.samples.size() == test.samples.size(),
          "ssnr: signals must have equal length");
  constexpr int kFrame = 256;
  constexpr double kLo = -10.0, kHi = 35.0;
  const size_t frames = clean.samples.size() / kFrame;
  require(frames >= 1, "ssnr: need at least one full 256-sample frame");
  double acc = 0.0;
  size_t used = 0;
  for (size_t m = 0; m < frames; ++m) {
    double pc = 0.0, pe = 0.0;
    for (int i = 0; i < kFrame; ++i) {
      const double c = clean.samples[m * kFrame + i];
      const double d = c - test.samples[m * kFrame + i];
      pc += c * c;
      pe += d * d;
    }
    if (pc == 0.0) continue;  // silent clean frame
    const double snr = pe == 0.0 ? kHi : 10.0 * std::log10(pc / pe);
    acc += std::clamp(snr, kLo, kHi);
    ++used;
  }
  require(used > 0, "ssnr: clean signal is silent in every frame");
  return acc / static_cast<double>(used);
}

namespace {

constexpr int kStoiRate = 10000;
constexpr int kStoiFrame = 256;
constexpr int kStoiHop = 128;
constexpr int kStoiFft = 512;
constexpr int kStoiBands = 15;
constexpr double kStoiMinFreq = 150.0;
constexpr int kStoiSegment = 30;       // 384 ms at 10 kHz / 128 hop
constexpr double kStoiDynRange = 40.0; // dB, silent-frame removal
constexpr double kStoiBeta = -15.0;    // dB, SDR clipping bound

std::vector<std::vector<double>> frame_signal(const std::vector<double>& x,
                                              const std::vector<double>& win) {
  std::vector<std::vector<double>> frames;
  if (x.size() < static_cast<size_t>(kStoiFrame)) return frames;
  for (size_t start = 0; start + kStoiFrame <= x.size(); start += kStoiHop) {
    std::vector<double> f(kStoiFrame);
    for (int i = 0; i < kStoiFrame; ++i) f[i] = x[start + i] * win[i];
    frames.push_back(std::move(f));
  }
  return frames;
}

// Energy VAD on the clean signal: drop frames more than 40 dB below the
// loudest, then overlap-add both signals back (50% hann overlap sums to 1).
void remove_silent_frames(std::vector<double>& clean, std::vector<double>& test) {
  const auto win = dsp::hann_window<double>(kStoiFrame);
  auto cf = frame_signal(clean, win);
  auto tf = frame_signal(test, win);
  require(!cf.empty(), "stoi: signal too short for framing");
  std::vector<double> energy_db(cf.size());
  double max_db = -1e300;
  for (size_t m = 0; m < cf.size(); ++m) {
    double e = 0.0;
    for (double v : cf[m]) e += v * v;
    energy_db[m] = 10.0 * std::log10(e + 1e-300);
    max_db = std::max(max_db, energy_db[m]);
  }
  std::vector<size_t> keep;
  for (size_t m = 0; m < cf.size(); ++m)
    if (energy_db[m] > max_db - kStoiDynRange) keep.push_back(m);
  require(!keep.empty(), "stoi: no active frames after silence removal");

  const size_t out_len = (keep.size() - 1) * kStoiHop + kStoiFrame;
  std::vector<double> c2(out_len, 0.0), t2(out_len, 0.0);
  for (size_t i = 0; i < keep.size(); ++i)
    for (int j = 0; j < kStoiFrame; ++j) {
      c2[i * kStoiHop + j] += cf[keep[i]][j];
      t2[i * kStoiHop + j] += tf[keep[i]][j];
    }
  clean = std::move(c2);
  test = std::move(t2);
}

// sqrt of summed power per one-third-octave band; bands_out: [frames][15].
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
  const auto win = dsp::hann_window<double>(kStoiFrame);
  auto frames = frame_signal(x, win);
  const int bins = kStoiFft / 2 + 1;

  static const auto band_of = [] {
    std::vector<int> map(kStoiFft / 2 + 1, -1);
    for (int j = 0; j < kStoiBands; ++j) {
      const double cf = kStoiMinFreq * std::pow(2.0, j / 3.0);
      const double lo = cf * std::pow(2.0, -1.0 / 6.0);
      const double hi = cf * std::pow(2.0, 1.0 / 6.0);
      for (int k = 0; k < kStoiFft / 2 + 1; ++k) {
        const double f = static_cast<double>(k) * kStoiRate / kStoiFft;
        if (f >= lo && f < hi) map[k] = j;
      }
    }
    return map;
  }();

  std::vector<std::vector<double>> env(frames.size(),
                                       std::vector<double>(kStoiBands, 0.0));
  std::vector<double> spec(2 * bins);
  for (size_t m = 0; m < frames.size(); ++m) {
    dsp::rdft(frames[m].data(), frames[m].size(), kStoiFft, spec.data());
    for (int k = 0; k < bins; ++k) {
      if (band_of[k] < 0) continue;
      const double re = spec[2 * k], im = spec[2 * k + 1];
      env[m][band_of[k]] += re * re + im * im;
    }
    for (int j = 0; j < kStoiBands; ++j) env[m][j] = std::sqrt(env[m][j]);
  }
  return env;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return cov / (std::sqrt(va) * std::sqrt(vb) + 1e-20);
}

}  // namespace

double stoi_score(const Waveform& clean, const Waveform& test) {
  require(clean.samples.size() == test.samples.size(),
          "stoi: signals must have equal length");
  require(clean.sample_rate == test.sample_rate,
          "stoi: signals must share a sample rate");
  require(clean.duration_s() >= 0.384, "stoi: need at least 384 ms of audio");

  Waveform c10 = clean.sample_rate == kStoiRate ? clean : dsp::resample(clean, kStoiRate);
  Waveform t10 = test.sample_rate == kStoiRate ? test : dsp::resample(test, kStoiRate);
  std::vector<double> c(c10.samples.begin(), c10.samples.end());
  std::vector<double> t(t10.samples.begin(), t10.samples.end());
  t.resize(c.size(), 0.0);

  remove_silent_frames(c, t);
  auto cb = band_envelopes(c);
  auto tb = band_envelopes(t);
  require(cb.size() >= kStoiSegment,
          "stoi: too short after silence removal (need 384 ms of speech)");

  const double clip_gain = 1.0 + std::pow(10.0, -kStoiBeta / 20.0);
  double acc = 0.0;
  size_t count = 0;
  std::vector<double> xj(kStoiSegment), yj(kStoiSegment);
  for (size_t m = kStoiSegment - 1; m < cb.size(); ++m) {
    for (int j = 0; j < kStoiBands; ++j) {
      double nx = 0, ny = 0;
      for (int i = 0; i < kStoiSegment; ++i) {
        xj[i] = cb[m - kStoiSegment + 1 + i][j];
        yj[i] = tb[m - kStoiSegment + 1 + i][j];
        nx += xj[i] * xj[i];
        ny += yj[i] * yj[i];
      }
      const double scale = std::sqrt(nx / (ny + 1e-300));
      for (int i = 0; i < kStoiSegment; ++i)
        yj[i] = std::min(yj[i] * scale, xj[i] * clip_gain);
      acc += correlation(xj, yj);
      ++count;
    }
  }
  return std::clamp(acc / static_cast<double>(count), 0.0, 1.0);
}

void EvalReport::finalize() {
  mean_ssnr = 0.0;
  mean_stoi = 0.0;
  for (const auto& f : files) {
    mean_ssnr += f.ssnr_db;
    mean_stoi += f.stoi;
  }
  if (!files.empty()) {
    mean_ssnr /= static_cast<double>(files.size());
    mean_stoi /= static_cast<double>(files.size());
  }
}

void write_report(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), "eval: cannot write report " + path);
  for (const auto& s : report.files) {
    nlohmann::json j = {{"file", s.file}, {"ssnr_db", s.ssnr_db}, {"stoi", s.stoi}};
    f << j.dump() << "\n";
  }
  nlohmann::json j = {{"summary", true},
                      {"count", report.files.size()},
                      {"mean_ssnr_db", report.mean_ssnr},
                      {"mean_stoi", report.mean_stoi}};
  f << j.dump() << "\n";
}

std::string format_summary(const EvalReport& report) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-32s %10s %8s\n", "file", "ssnr_db", "stoi");
  out += line;
  for (const auto& s : report.files) {
    std::snprintf(line, sizeof(line), "%-32s %10.3f %8.4f\n", s.file.c_str(),
                  s.ssnr_db, s.stoi);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-32s %10.3f %8.4f  (n=%zu)\n", "mean",
                report.mean_ssnr, report.mean_stoi, report.files.size());
  out += line;
  return out;
}

}  // namespace cmcr::metrics
