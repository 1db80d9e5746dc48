// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

namespace cmcr::dsp {

// Mono sample sequence; toolkit-internal audio is 16 kHz in [-1, 1].
struct Waveform {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

constexpr int kCanonicalRate = 16000;

// Reads RIFF/WAVE, PCM16 or IEEE float32; stereo is averaged to mono.
// Returns samples in [-1, 1] at the file's native rate.
Waveform load_wav(const std::string& path);

// PCM16 little-endian write; samples are clipped to [-1, 1] first.
void save_wav(const std::string& path, const Waveform& w);

// Band-limited windowed-sinc resampling.
Waveform resample(const Waveform& w, int target_hz);

// load_wav + resample to 16 kHz where needed.
Waveform ingest_wav(const std::string& path);

}  // namespace cmcr::dsp
