// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cmcr/dsp/stft.hpp"
#include "cmcr/dsp/wav.hpp"

namespace cmcr::data {

// Corpus construction parameters. With `synthetic` set the clean/noise
// directories are ignored and harmonic tones plus modulated noise are
// generated instead; every item derives its randomness from (seed, index).
struct MixSpec {
  std::string clean_dir;
  std::string noise_dir;
  std::vector<double> snr_levels_db = {-5, -4, -3, -2, -1, 0, 5};
  double clip_seconds = 1.0;
  uint64_t seed = 0;
  bool synthetic = false;

  void validate(const dsp::StftConfig& cfg) const;
};

struct ManifestEntry {
  std::string clean_path;
  std::string noisy_path;
  double snr_db = 0.0;
  uint64_t item_seed = 0;
};

// noisy = clean + gain * noise with gain chosen so the clean-to-scaled-noise
// power ratio hits snr_db exactly. Lengths must already match.
std::pair<dsp::Waveform, double> mix_at_snr(const dsp::Waveform& clean,
                                            const dsp::Waveform& noise,
                                            double snr_db);

// Tiles (with a random circular offset) or crops noise to `len` samples.
dsp::Waveform fit_noise(const dsp::Waveform& noise, size_t len,
                        std::mt19937_64& rng);

// Harmonic pseudo-voice: randomized f0 with vibrato, decaying harmonics,
// slow amplitude envelope.
dsp::Waveform synth_clean(double seconds, std::mt19937_64& rng);

// White noise under a slow random envelope (babble-like modulation).
dsp::Waveform synth_noise(double seconds, std::mt19937_64& rng);

// Writes out_dir/clean/NNNN.wav, out_dir/noisy/NNNN.wav and
// out_dir/manifest.jsonl; returns the manifest. Byte-reproducible from
// (spec, n_items).
std::vector<ManifestEntry> synth_corpus(const MixSpec& spec, int n_items,
                                        const std::string& out_dir);

std::vector<ManifestEntry> load_manifest(const std::string& path);

// Zero-padded training minibatch. Spectrograms are stacked [B, T_max, F, 2];
// waveforms [B, N_max]; pad masks carry the per-item valid extents.
struct Batch {
  int64_t size = 0;
  int64_t frames = 0;
  int64_t bins = 0;
  int64_t wav_len = 0;
  std::vector<float> noisy_spec;
  std::vector<float> clean_spec;
  std::vector<float> noisy_wav;
  std::vector<float> clean_wav;
  std::vector<int64_t> valid_frames;
  std::vector<int64_t> valid_samples;
};

struct BatchItem {
  dsp::Waveform clean;
  dsp::Waveform noisy;
};

Batch make_batch(const std::vector<BatchItem>& items, const dsp::StftConfig& cfg);

BatchItem load_pair(const ManifestEntry& e);

}  // namespace cmcr::data
