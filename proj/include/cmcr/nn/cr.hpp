// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "cmcr/autograd/signal_ops.hpp"

// Contrastive regularization: a frozen deterministic encoder maps waveforms
// into a shared feature space; the loss is the pull/push ratio
//   L = d(E(s), E(s_hat)) / (d(E(y), E(s_hat)) + eps)
// with d the mean absolute difference. Gradients reach s_hat (and through it
// the enhancer) but never the encoder, and inference never evaluates this.

namespace cmcr::nn {

enum class EncoderKind {
  kLogMelProj,  // log-mel features through a fixed random projection
  kLinearStub,  // exactly linear frame stacking; monotonicity tests only
};

constexpr uint64_t kEncoderSeed = 0xC3C5;

struct CrConfig {
  double eps = 1e-7;
};

template <class T>
struct FrozenEncoder {
  EncoderKind kind = EncoderKind::kLogMelProj;
  dsp::StftConfig stft;
  int n_mels = 40;
  int embed_dim = 64;
  Tensor<T> projection;  // [n_mels, embed_dim], never trainable

  static FrozenEncoder make(EncoderKind kind, const dsp::StftConfig& cfg,
                            int n_mels = 40, int embed_dim = 64) {
    FrozenEncoder e;
    e.kind = kind;
    e.stft = cfg;
    e.n_mels = n_mels;
    e.embed_dim = embed_dim;
    std::mt19937_64 rng(kEncoderSeed);
    e.projection = Tensor<T>::randn({n_mels, embed_dim}, rng,
                                    static_cast<T>(1.0 / std::sqrt(double(n_mels))));
    return e;
  }

  // [frames, embed_dim]; differentiable in the waveform.
  Tensor<T> encode(const Tensor<T>& wave) const {
    require(wave.shape().size() == 1, "encode: expected a 1-D waveform tensor");
    if (kind == EncoderKind::kLinearStub) {
      const int64_t frames = wave.numel() / embed_dim;
      require(frames >= 1, "encode: input shorter than one embedding frame");
      return reshape(narrow(wave, 0, 0, frames * embed_dim), {frames, embed_dim});
    }
    require(wave.numel() >= stft.win_len,
            "encode: input shorter than the analysis window");
    auto feats = log_mel(wave, stft, n_mels);
    return bmm(feats, projection);
  }
};

template <class T>
Tensor<T> feature_distance(const Tensor<T>& a, const Tensor<T>& b) {
  return mean_all(abs_(sub(a, b)));
}

template <class T>
Tensor<T> cr_loss(const Tensor<T>& clean, const Tensor<T>& noisy,
                  const Tensor<T>& enhanced, const FrozenEncoder<T>& enc,
                  const CrConfig& cfg) {
  require(clean.numel() == noisy.numel() && clean.numel() == enhanced.numel(),
          "cr_loss: waveform lengths must match");
  auto e_clean = enc.encode(clean);
  auto e_noisy = enc.encode(noisy);
  auto e_hat = enc.encode(enhanced);
  auto pull = feature_distance(e_clean, e_hat);
  auto push = add_scalar(feature_distance(e_noisy, e_hat), static_cast<T>(cfg.eps));
  return div(pull, push);
}

}  // namespace cmcr::nn
