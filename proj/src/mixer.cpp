// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cmcr/data/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cmcr/common.hpp"

namespace cmcr::data {

namespace fs = std::filesystem;
using dsp::Waveform;

namespace {

constexpr double kPi = 3.14159265358979323846;

double mean_square(const std::vector<float>& v) {
  double acc = 0.0;
  for (float x : v) acc += static_cast<double>(x) * x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

std::vector<std::string> list_wavs(const std::string& dir) {
  std::vector<std::string> out;
  require(fs::is_directory(dir), "mix: not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

Waveform crop_or_tile(const Waveform& w, size_t len, std::mt19937_64& rng) {
  if (w.samples.size() == len) return w;
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(len);
  if (w.samples.size() > len) {
    std::uniform_int_distribution<size_t> d(0, w.samples.size() - len);
    const size_t off = d(rng);
    std::copy_n(w.samples.begin() + static_cast<long>(off), len, out.samples.begin());
  } else {
    std::uniform_int_distribution<size_t> d(0, w.samples.size() - 1);
    const size_t off = d(rng);
    for (size_t i = 0; i < len; ++i)
      out.samples[i] = w.samples[(off + i) % w.samples.size()];
  }
  return out;
}

}  // namespace

void MixSpec::validate(const dsp::StftConfig& cfg) const {
  require(!snr_levels_db.empty(), "mix: SNR level list must be nonempty");
  require(clip_seconds * dsp::kCanonicalRate > cfg.win_len,
          "mix: clip_seconds too short for the analysis window");
}

std::pair<Waveform, double> mix_at_snr(const Waveform& clean,
                                       const Waveform& noise, double snr_db) {
  require(clean.sample_rate == dsp::kCanonicalRate &&
              noise.sample_rate == dsp::kCanonicalRate,
          "mix: both signals must be at 16 kHz");
  require(clean.samples.size() == noise.samples.size(),
          "mix: length mismatch (fit the noise first)");
  const double p_clean = mean_square(clean.samples);
  const double p_noise = mean_square(noise.samples);
  require(p_clean > 0.0, "mix: silent clean signal makes the SNR undefined");
  require(p_noise > 0.0, "mix: silent noise signal makes the SNR undefined");
  const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform noisy;
  noisy.sample_rate = clean.sample_rate;
  noisy.samples.resize(clean.samples.size());
  for (size_t i = 0; i < clean.samples.size(); ++i)
    noisy.samples[i] = static_cast<float>(clean.samples[i] + gain * noise.samples[i]);
  return {std::move(noisy), gain};
}

Waveform fit_noise(const Waveform& noise, size_t len, std::mt19937_64& rng) {
  require(!noise.samples.empty(), "mix: empty noise signal");
  return crop_or_tile(noise, len, rng);
}

Waveform synth_clean(double seconds, std::mt19937_64& rng) {
  const int sr = dsp::kCanonicalRate;
  const size_t n = static_cast<size_t>(std::llround(seconds * sr));
  std::uniform_real_distribution<double> f0_d(110.0, 280.0);
  std::uniform_real_distribution<double> phase_d(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> vib_rate_d(4.0, 6.5);
  std::uniform_real_distribution<double> am_rate_d(0.5, 2.0);
  std::uniform_int_distribution<int> nharm_d(5, 10);

  const double f0 = f0_d(rng);
  const int nharm = nharm_d(rng);
  const double vib_rate = vib_rate_d(rng);
  const double vib_phase = phase_d(rng);
  const double am_rate = am_rate_d(rng);
  const double am_phase = phase_d(rng);
  std::vector<double> phases(nharm);
  for (auto& p : phases) p = phase_d(rng);

  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  double peak = 0.0;
  std::vector<double> buf(n);
  double phase = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double inst_f0 = f0 * (1.0 + 0.02 * std::sin(2.0 * kPi * vib_rate * t + vib_phase));
    phase += 2.0 * kPi * inst_f0 / sr;
    double s = 0.0;
    for (int h = 1; h <= nharm; ++h)
      s += std::sin(h * phase + phases[h - 1]) / h;
    const double env = 0.6 + 0.4 * std::sin(2.0 * kPi * am_rate * t + am_phase);
    buf[i] = s * env;
    peak = std::max(peak, std::abs(buf[i]));
  }
  const double norm = peak > 0 ? 0.25 / peak : 0.0;
  for (size_t i = 0; i < n; ++i) w.samples[i] = static_cast<float>(buf[i] * norm);
  return w;
}

Waveform synth_noise(double seconds, std::mt19937_64& rng) {
  const int sr = dsp::kCanonicalRate;
  const size_t n = static_cast<size_t>(std::llround(seconds * sr));
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> rate_d(2.0, 8.0);
  std::uniform_real_distribution<double> phase_d(0.0, 2.0 * kPi);
  const double r1 = rate_d(rng), r2 = rate_d(rng);
  const double p1 = phase_d(rng), p2 = phase_d(rng);
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double env = 0.55 + 0.3 * std::sin(2.0 * kPi * r1 * t + p1) +
                       0.15 * std::sin(2.0 * kPi * r2 * t + p2);
    w.samples[i] = static_cast<float>(0.1 * g(rng) * env);
  }
  return w;
}

std::vector<ManifestEntry> synth_corpus(const MixSpec& spec, int n_items,
                                        const std::string& out_dir) {
  require(n_items >= 1, "mix: n_items must be >= 1");
  spec.validate(dsp::StftConfig{});
  std::vector<std::string> clean_files, noise_files;
  if (!spec.synthetic) {
    clean_files = list_wavs(spec.clean_dir);
    noise_files = list_wavs(spec.noise_dir);
    require(!clean_files.empty(),
            "mix: no .wav files in " + spec.clean_dir + " (pass --synthetic to generate)");
    require(!noise_files.empty(),
            "mix: no .wav files in " + spec.noise_dir + " (pass --synthetic to generate)");
  }

  fs::create_directories(fs::path(out_dir) / "clean");
  fs::create_directories(fs::path(out_dir) / "noisy");
  const size_t clip_len =
      static_cast<size_t>(std::llround(spec.clip_seconds * dsp::kCanonicalRate));

  std::vector<ManifestEntry> manifest(n_items);
  for (int i = 0; i < n_items; ++i) {
    const uint64_t item_seed = mix_seed(spec.seed, static_cast<uint64_t>(i));
    std::mt19937_64 rng(item_seed);

    Waveform clean, noise;
    if (spec.synthetic) {
      clean = synth_clean(spec.clip_seconds, rng);
      noise = synth_noise(spec.clip_seconds, rng);
    } else {
      std::uniform_int_distribution<size_t> cd(0, clean_files.size() - 1);
      std::uniform_int_distribution<size_t> nd(0, noise_files.size() - 1);
      clean = crop_or_tile(dsp::ingest_wav(clean_files[cd(rng)]), clip_len, rng);
      noise = crop_or_tile(dsp::ingest_wav(noise_files[nd(rng)]), clip_len, rng);
    }
    noise = fit_noise(noise, clean.samples.size(), rng);

    std::uniform_int_distribution<size_t> sd(0, spec.snr_levels_db.size() - 1);
    const double snr = spec.snr_levels_db[sd(rng)];
    auto [noisy, gain] = mix_at_snr(clean, noise, snr);
    (void)gain;

    // Rescale the pair together if the mixture would clip in PCM16; a common
    // factor leaves the SNR untouched.
    float peak = 0.0f;
    for (float s : noisy.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0.99f) {
      const float k = 0.99f / peak;
      for (auto& s : noisy.samples) s *= k;
      for (auto& s : clean.samples) s *= k;
    }

    char name[32];
    std::snprintf(name, sizeof(name), "%04d.wav", i);
    // Manifest paths are relative to the manifest file, so a corpus built
    // from the same seed is byte-identical regardless of where it lives.
    ManifestEntry e;
    e.clean_path = std::string("clean/") + name;
    e.noisy_path = std::string("noisy/") + name;
    e.snr_db = snr;
    e.item_seed = item_seed;
    dsp::save_wav((fs::path(out_dir) / e.clean_path).string(), clean);
    dsp::save_wav((fs::path(out_dir) / e.noisy_path).string(), noisy);
    manifest[i] = std::move(e);
  }

  std::ofstream mf(fs::path(out_dir) / "manifest.jsonl", std::ios::trunc);
  require(mf.good(), "mix: cannot write manifest in " + out_dir);
  for (auto& e : manifest) {
    nlohmann::json j = {{"clean_path", e.clean_path},
                        {"noisy_path", e.noisy_path},
                        {"snr_db", e.snr_db},
                        {"item_seed", e.item_seed}};
    mf << j.dump() << "\n";
    e.clean_path = (fs::path(out_dir) / e.clean_path).string();
    e.noisy_path = (fs::path(out_dir) / e.noisy_path).string();
  }
  return manifest;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "mix: cannot open manifest " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    require(!j.is_discarded(), "mix: bad manifest line: " + line);
    const fs::path base = fs::path(path).parent_path();
    ManifestEntry e;
    e.clean_path = (base / j.at("clean_path").get<std::string>()).string();
    e.noisy_path = (base / j.at("noisy_path").get<std::string>()).string();
    e.snr_db = j.at("snr_db").get<double>();
    e.item_seed = j.at("item_seed").get<uint64_t>();
    out.push_back(std::move(e));
  }
  require(!out.empty(), "mix: empty manifest " + path);
  return out;
}

BatchItem load_pair(const ManifestEntry& e) {
  BatchItem it;
  it.clean = dsp::ingest_wav(e.clean_path);
  it.noisy = dsp::ingest_wav(e.noisy_path);
  require(it.clean.samples.size() == it.noisy.samples.size(),
          "mix: clean/noisy length mismatch for " + e.clean_path);
  return it;
}

Batch make_batch(const std::vector<BatchItem>& items, const dsp::StftConfig& cfg) {
  require(!items.empty(), "batch: no items");
  Batch b;
  b.size = static_cast<int64_t>(items.size());
  b.bins = cfg.bins();
  for (const auto& it : items) {
    require(it.clean.samples.size() == it.noisy.samples.size(),
            "batch: clean/noisy length mismatch");
    b.wav_len = std::max<int64_t>(b.wav_len, static_cast<int64_t>(it.noisy.samples.size()));
  }
  b.frames = dsp::stft_frames(b.wav_len, cfg);
  b.noisy_spec.assign(static_cast<size_t>(b.size * b.frames * b.bins * 2), 0.0f);
  b.clean_spec.assign(b.noisy_spec.size(), 0.0f);
  b.noisy_wav.assign(static_cast<size_t>(b.size * b.wav_len), 0.0f);
  b.clean_wav.assign(b.noisy_wav.size(), 0.0f);
  b.valid_frames.resize(items.size());
  b.valid_samples.resize(items.size());

  std::vector<float> padded(static_cast<size_t>(b.wav_len));
  for (int64_t i = 0; i < b.size; ++i) {
    const auto& it = items[static_cast<size_t>(i)];
    const int64_t n = static_cast<int64_t>(it.noisy.samples.size());
    b.valid_samples[i] = n;
    b.valid_frames[i] = dsp::stft_frames(n, cfg);
    std::copy(it.noisy.samples.begin(), it.noisy.samples.end(),
              b.noisy_wav.begin() + i * b.wav_len);
    std::copy(it.clean.samples.begin(), it.clean.samples.end(),
              b.clean_wav.begin() + i * b.wav_len);

    // Specs are computed on the zero-padded waveforms so every item spans
    // T_max frames; padded-region frames come out zero wherever the window
    // sees only padding.
    std::fill(padded.begin(), padded.end(), 0.0f);
    std::copy(it.noisy.samples.begin(), it.noisy.samples.end(), padded.begin());
    dsp::stft_core(padded.data(), b.wav_len, cfg,
                   b.noisy_spec.data() + i * b.frames * b.bins * 2);
    std::fill(padded.begin(), padded.end(), 0.0f);
    std::copy(it.clean.samples.begin(), it.clean.samples.end(), padded.begin());
    dsp::stft_core(padded.data(), b.wav_len, cfg,
                   b.clean_spec.data() + i * b.frames * b.bins * 2);
  }
  return b;
}

}  // namespace cmcr::data
