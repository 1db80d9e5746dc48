// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "cmcr/dsp/wav.hpp"

namespace cmcr::metrics {

// Segmental SNR: mean over 256-sample non-overlapping frames of
// clip(10*log10(sum c^2 / sum (c-t)^2), -10, 35); digitally silent clean
// frames are skipped.
double ssnr_db(const dsp::Waveform& clean, const dsp::Waveform& test);

// Short-time objective intelligibility (standard 2011 procedure): resample
// to 10 kHz, energy-VAD frame removal at 40 dB range, 15 one-third-octave
// bands from 150 Hz, 384 ms envelope segments, normalization + clipping at
// -15 dB SDR, mean band/segment correlation. Returns a score in [0, 1].
double stoi_score(const dsp::Waveform& clean, const dsp::Waveform& test);

struct FileScore {
  std::string file;
  double ssnr_db = 0.0;
  double stoi = 0.0;
};

struct EvalReport {
  std::vector<FileScore> files;
  double mean_ssnr = 0.0;
  double mean_stoi = 0.0;

  void finalize();
};

// One JSONL record per file plus a trailing summary record.
void write_report(const EvalReport& report, const std::string& path);
std::string format_summary(const EvalReport& report);

}  // namespace cmcr::metrics
