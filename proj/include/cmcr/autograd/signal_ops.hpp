// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "cmcr/autograd/ops.hpp"
#include "cmcr/dsp/mel.hpp"
#include "cmcr/dsp/stft.hpp"
#include "cmcr/dsp/wav.hpp"

// STFT and weighted-overlap-add inverse as recorded ops. Both are linear, so
// the backward passes are their adjoints (see dsp/stft.hpp). Tensors carry
// spectra channel-major as [2, T, F] (real plane then imaginary plane),
// matching the network's channel convention.

namespace cmcr {

template <class T>
Tensor<T> stft_op(const Tensor<T>& wave, const dsp::StftConfig& cfg) {
  require(wave.shape().size() == 1, "stft: expected a 1-D waveform tensor");
  const int64_t n = wave.numel();
  const int64_t frames = dsp::stft_frames(n, cfg);
  const int64_t bins = cfg.bins();
  auto sw = wave.storage();
  auto out = make_op_output<T>(
      Shape{2, frames, bins}, {sw}, [sw, cfg, n, frames, bins](Storage<T>& o) {
        if (!sw->requires_grad) return;
        sw->ensure_grad();
        std::vector<T> gi(static_cast<size_t>(frames) * bins * 2);
        for (int64_t t = 0; t < frames; ++t)
          for (int64_t k = 0; k < bins; ++k) {
            gi[(t * bins + k) * 2 + 0] = o.g[t * bins + k];
            gi[(t * bins + k) * 2 + 1] = o.g[frames * bins + t * bins + k];
          }
        dsp::stft_adjoint(gi.data(), frames, cfg, n, sw->g.data());
      });
  std::vector<T> tmp(static_cast<size_t>(frames) * bins * 2);
  dsp::stft_core(sw->v.data(), n, cfg, tmp.data());
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t k = 0; k < bins; ++k) {
      out.data()[t * bins + k] = tmp[(t * bins + k) * 2 + 0];
      out.data()[frames * bins + t * bins + k] = tmp[(t * bins + k) * 2 + 1];
    }
  return out;
}

template <class T>
Tensor<T> istft_op(const Tensor<T>& spec, const dsp::StftConfig& cfg,
                   int64_t out_len) {
  const Shape& sh = spec.shape();
  require(sh.size() == 3 && sh[0] == 2 && sh[2] == cfg.bins(),
          "istft: expected [2, T, " + std::to_string(cfg.bins()) + "], got " +
              shape_str(sh));
  const int64_t frames = sh[1], bins = sh[2];
  auto ss = spec.storage();
  auto out = make_op_output<T>(
      Shape{out_len}, {ss}, [ss, cfg, out_len, frames, bins](Storage<T>& o) {
        if (!ss->requires_grad) return;
        ss->ensure_grad();
        std::vector<T> gi(static_cast<size_t>(frames) * bins * 2, T(0));
        dsp::istft_adjoint(o.g.data(), out_len, cfg, frames, gi.data());
        for (int64_t t = 0; t < frames; ++t)
          for (int64_t k = 0; k < bins; ++k) {
            ss->g[t * bins + k] += gi[(t * bins + k) * 2 + 0];
            ss->g[frames * bins + t * bins + k] += gi[(t * bins + k) * 2 + 1];
          }
      });
  std::vector<T> tmp(static_cast<size_t>(frames) * bins * 2);
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t k = 0; k < bins; ++k) {
      tmp[(t * bins + k) * 2 + 0] = ss->v[t * bins + k];
      tmp[(t * bins + k) * 2 + 1] = ss->v[frames * bins + t * bins + k];
    }
  dsp::istft_core(tmp.data(), frames, cfg, out_len, out.data().data());
  return out;
}

// log(mel energies + 1e-8) on the analysis grid; [frames, n_mels].
// Differentiable in the waveform for the regularizer's encoder.
template <class T>
Tensor<T> log_mel(const Tensor<T>& wave, const dsp::StftConfig& cfg,
                  int n_mels = 40, int sample_rate = dsp::kCanonicalRate) {
  auto spec = stft_op(wave, cfg);
  const int64_t frames = spec.dim(1), bins = spec.dim(2);
  auto re = reshape(narrow(spec, 0, 0, 1), {frames, bins});
  auto im = reshape(narrow(spec, 0, 1, 1), {frames, bins});
  auto power = add(mul(re, re), mul(im, im));
  auto fb = Tensor<T>::from(
      {n_mels, bins},
      dsp::mel_filterbank<T>(n_mels, static_cast<int>(bins), sample_rate));
  auto energies = bmm(power, fb, false, true);  // [frames, n_mels]
  return log_(add_scalar(energies, static_cast<T>(1e-8)));
}

template <class T = float>
Tensor<T> wave_tensor(const dsp::Waveform& w) {
  const int64_t n = static_cast<int64_t>(w.samples.size());
  std::vector<T> v(w.samples.begin(), w.samples.end());
  return Tensor<T>::from({n}, std::move(v));
}

}  // namespace cmcr
