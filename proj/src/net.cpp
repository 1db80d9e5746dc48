// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cmcr/model/net.hpp"

#include "cmcr/autograd/signal_ops.hpp"

namespace cmcr::model {

namespace {

// Channel-concatenate two complex feature maps, keeping the halves
// convention: [a_r b_r | a_i b_i].
template <class T>
Tensor<T> complex_concat(const Tensor<T>& a, const Tensor<T>& b) {
  const int64_t ca = a.dim(1) / 2, cb = b.dim(1) / 2;
  auto cat = concat<T>({a, b}, 1);
  std::vector<int32_t> perm;
  perm.reserve(2 * (ca + cb));
  for (int64_t i = 0; i < ca; ++i) perm.push_back(static_cast<int32_t>(i));
  for (int64_t i = 0; i < cb; ++i) perm.push_back(static_cast<int32_t>(2 * ca + i));
  for (int64_t i = 0; i < ca; ++i) perm.push_back(static_cast<int32_t>(ca + i));
  for (int64_t i = 0; i < cb; ++i) perm.push_back(static_cast<int32_t>(2 * ca + cb + i));
  return gather_channels(cat, std::move(perm));
}

nn::ConvGeom stage_geom(const ModelConfig& cfg) {
  nn::ConvGeom g;
  g.kt = cfg.kernel_t;
  g.kf = cfg.kernel_f;
  g.stride_t = 1;
  g.stride_f = 2;
  g.pad_t0 = cfg.kernel_t - 1;  // causal
  g.pad_t1 = 0;
  g.pad_f0 = (cfg.kernel_f - 1) / 2;
  g.pad_f1 = cfg.kernel_f - 1 - (cfg.kernel_f - 1) / 2;
  return g;
}

}  // namespace

template <class T>
void CmcrNet<T>::init(const ModelConfig& config) {
  config.validate();
  cfg = config;
  const auto g = stage_geom(cfg);

  f_dims.assign(1, cfg.stft.bins());
  for (int s = 0; s < 4; ++s) f_dims.push_back(g.out_f(f_dims.back()));
  require(f_dims.back() >= 2,
          "net: bottleneck frequency axis collapsed to " +
              std::to_string(f_dims.back()) + "; use a larger FFT");

  enc.assign(4, {});
  enc_bn.assign(4, {});
  for (int s = 0; s < 4; ++s) {
    enc[s].ci = cfg.enc_channels[s] / 2;
    enc[s].co = cfg.enc_channels[s + 1] / 2;
    enc[s].geom = g;
    enc[s].init("enc" + std::to_string(s), cfg.seed);
    enc_bn[s].init(cfg.enc_channels[s + 1]);
  }

  cms.assign(cfg.num_cm, {});
  for (int i = 0; i < cfg.num_cm; ++i)
    cms[i].init("cm" + std::to_string(i), cfg.seed, cfg.enc_channels[4],
                static_cast<int>(f_dims[4]));

  dec.assign(4, {});
  dec_bn.assign(3, {});
  for (int s = 0; s < 4; ++s) {
    // decoder stage s mirrors encoder stage 3-s and consumes the skip concat
    dec[s].ci = cfg.enc_channels[4 - s];
    dec[s].co = cfg.enc_channels[3 - s] / 2;
    dec[s].geom = g;
    dec[s].init("dec" + std::to_string(s), cfg.seed);
    if (s < 3) dec_bn[s].init(cfg.enc_channels[3 - s]);
  }
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> CmcrNet<T>::forward(const Tensor<T>& x) {
  require(x.shape().size() == 4 && x.dim(1) == 2 && x.dim(3) == f_dims[0],
          "net: expected [B, 2, T, " + std::to_string(f_dims[0]) + "], got " +
              shape_str(x.shape()));
  const int64_t t_frames = x.dim(2);

  std::vector<Tensor<T>> skips;
  Tensor<T> cur = x;
  for (int s = 0; s < 4; ++s) {
    cur = elu(enc_bn[s].forward(enc[s].forward(cur), training));
    skips.push_back(cur);
  }

  Tensor<T> ca_sum = Tensor<T>::scalar(T(0));
  const auto cm_cfg = cfg.cm_config();
  for (auto& cm : cms) {
    auto [y, l] = cm.forward(cur, cm_cfg);
    cur = y;
    ca_sum = add(ca_sum, l);
  }
  auto l_ca = mul_scalar(ca_sum, static_cast<T>(1.0 / cfg.num_cm));

  for (int s = 0; s < 4; ++s) {
    cur = complex_concat(cur, skips[static_cast<size_t>(3 - s)]);
    cur = dec[s].forward(cur, t_frames, f_dims[static_cast<size_t>(3 - s)]);
    if (s < 3) cur = elu(dec_bn[s].forward(cur, training));
  }
  return {cur, l_ca};
}

template <class T>
std::vector<nn::NamedParam<T>> CmcrNet<T>::params() {
  std::vector<nn::NamedParam<T>> out;
  for (int s = 0; s < 4; ++s) {
    enc[s].collect(out, "enc" + std::to_string(s));
    enc_bn[s].collect(out, "enc_bn" + std::to_string(s));
  }
  for (size_t i = 0; i < cms.size(); ++i)
    cms[i].collect(out, "cm" + std::to_string(i));
  for (int s = 0; s < 4; ++s) {
    dec[s].collect(out, "dec" + std::to_string(s));
    if (s < 3) dec_bn[s].collect(out, "dec_bn" + std::to_string(s));
  }
  return out;
}

template <class T>
std::vector<typename CmcrNet<T>::NamedBuffer> CmcrNet<T>::buffers() {
  std::vector<NamedBuffer> out;
  for (int s = 0; s < 4; ++s) {
    out.push_back({"enc_bn" + std::to_string(s) + ".run_mean", &enc_bn[s].run_mean});
    out.push_back({"enc_bn" + std::to_string(s) + ".run_var", &enc_bn[s].run_var});
  }
  for (int s = 0; s < 3; ++s) {
    out.push_back({"dec_bn" + std::to_string(s) + ".run_mean", &dec_bn[s].run_mean});
    out.push_back({"dec_bn" + std::to_string(s) + ".run_var", &dec_bn[s].run_var});
  }
  return out;
}

template <class T>
Tensor<T> batch_input(const data::Batch& b, bool clean) {
  const auto& src = clean ? b.clean_spec : b.noisy_spec;
  std::vector<T> v(src.size());
  const int64_t tf = b.frames * b.bins;
  for (int64_t s = 0; s < b.size; ++s)
    for (int64_t t = 0; t < b.frames; ++t)
      for (int64_t k = 0; k < b.bins; ++k) {
        const int64_t in = ((s * b.frames + t) * b.bins + k) * 2;
        v[s * 2 * tf + t * b.bins + k] = static_cast<T>(src[in]);
        v[s * 2 * tf + tf + t * b.bins + k] = static_cast<T>(src[in + 1]);
      }
  return Tensor<T>::from({b.size, 2, b.frames, b.bins}, std::move(v));
}

template <class T>
LossBreakdown<T> loss_from_enhanced(const data::Batch& batch,
                                    const Tensor<T>& enhanced,
                                    const Tensor<T>& l_ca,
                                    const nn::FrozenEncoder<T>& encoder,
                                    const ModelConfig& cfg) {
  require(enhanced.shape() == Shape{batch.size, 2, batch.frames, batch.bins},
          "loss: enhanced spec shape mismatch " + shape_str(enhanced.shape()));
  LossBreakdown<T> out;

  Tensor<T> mse;
  std::vector<Tensor<T>> enhanced_waves(static_cast<size_t>(batch.size));
  if (!cfg.mse_spec_domain) {
    Tensor<T> sq_sum = Tensor<T>::scalar(T(0));
    int64_t n_total = 0;
    for (int64_t i = 0; i < batch.size; ++i) {
      const int64_t vt = batch.valid_frames[static_cast<size_t>(i)];
      const int64_t vs = batch.valid_samples[static_cast<size_t>(i)];
      auto spec_i = reshape(narrow(enhanced, 0, i, 1), {2, batch.frames, batch.bins});
      auto valid = narrow(spec_i, 1, 0, vt);
      auto wav = istft_op(valid, cfg.stft, vs);
      enhanced_waves[static_cast<size_t>(i)] = wav;
      std::vector<T> cv(batch.clean_wav.begin() + i * batch.wav_len,
                        batch.clean_wav.begin() + i * batch.wav_len + vs);
      auto clean_i = Tensor<T>::from({vs}, std::move(cv));
      auto diff = sub(wav, clean_i);
      sq_sum = add(sq_sum, sum_all(mul(diff, diff)));
      n_total += vs;
    }
    mse = mul_scalar(sq_sum, static_cast<T>(1.0 / static_cast<double>(n_total)));
  } else {
    auto clean_spec = batch_input<T>(batch, /*clean=*/true);
    Tensor<T> sq_sum = Tensor<T>::scalar(T(0));
    int64_t n_total = 0;
    for (int64_t i = 0; i < batch.size; ++i) {
      const int64_t vt = batch.valid_frames[static_cast<size_t>(i)];
      auto ei = narrow(reshape(narrow(enhanced, 0, i, 1), {2, batch.frames, batch.bins}), 1, 0, vt);
      auto ci = narrow(reshape(narrow(clean_spec, 0, i, 1), {2, batch.frames, batch.bins}), 1, 0, vt);
      auto diff = sub(ei, ci);
      sq_sum = add(sq_sum, sum_all(mul(diff, diff)));
      n_total += 2 * vt * batch.bins;
    }
    mse = mul_scalar(sq_sum, static_cast<T>(1.0 / static_cast<double>(n_total)));
  }
  out.mse = mse;
  out.ca = l_ca;

  Tensor<T> total = mse;
  if (cfg.alpha > 0.0) total = add(total, mul_scalar(l_ca, static_cast<T>(cfg.alpha)));

  if (cfg.beta > 0.0) {
    const auto cr_cfg = cfg.cr_config();
    Tensor<T> cr_sum = Tensor<T>::scalar(T(0));
    for (int64_t i = 0; i < batch.size; ++i) {
      const int64_t vs = batch.valid_samples[static_cast<size_t>(i)];
      Tensor<T> wav = enhanced_waves[static_cast<size_t>(i)];
      if (!wav.defined()) {
        const int64_t vt = batch.valid_frames[static_cast<size_t>(i)];
        auto spec_i = reshape(narrow(enhanced, 0, i, 1), {2, batch.frames, batch.bins});
        wav = istft_op(narrow(spec_i, 1, 0, vt), cfg.stft, vs);
      }
      std::vector<T> cv(batch.clean_wav.begin() + i * batch.wav_len,
                        batch.clean_wav.begin() + i * batch.wav_len + vs);
      std::vector<T> nv(batch.noisy_wav.begin() + i * batch.wav_len,
                        batch.noisy_wav.begin() + i * batch.wav_len + vs);
      auto clean_i = Tensor<T>::from({vs}, std::move(cv));
      auto noisy_i = Tensor<T>::from({vs}, std::move(nv));
      cr_sum = add(cr_sum, nn::cr_loss(clean_i, noisy_i, wav, encoder, cr_cfg));
    }
    out.cr = mul_scalar(cr_sum, static_cast<T>(1.0 / static_cast<double>(batch.size)));
    total = add(total, mul_scalar(out.cr, static_cast<T>(cfg.beta)));
  } else {
    out.cr = Tensor<T>::scalar(T(0));
  }
  out.total = total;
  return out;
}

template <class T>
LossBreakdown<T> total_loss(const data::Batch& batch, CmcrNet<T>& net,
                            const nn::FrozenEncoder<T>& encoder) {
  auto input = batch_input<T>(batch, /*clean=*/false);
  auto [enhanced, l_ca] = net.forward(input);
  return loss_from_enhanced(batch, enhanced, l_ca, encoder, net.cfg);
}

dsp::Waveform enhance_waveform(const dsp::Waveform& in, CmcrNet<float>& net) {
  require(in.sample_rate == dsp::kCanonicalRate, "enhance: expected 16 kHz input");
  const int64_t n = static_cast<int64_t>(in.samples.size());
  require(n >= net.cfg.stft.win_len,
          "enhance: input shorter than the analysis window");
  NoGradGuard no_grad;
  const bool was_training = net.training;
  net.training = false;

  const int64_t frames = dsp::stft_frames(n, net.cfg.stft);
  const int64_t bins = net.cfg.stft.bins();
  std::vector<float> spec(static_cast<size_t>(frames) * bins * 2);
  dsp::stft_core(in.samples.data(), n, net.cfg.stft, spec.data());
  std::vector<float> planes(spec.size());
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t k = 0; k < bins; ++k) {
      planes[t * bins + k] = spec[(t * bins + k) * 2];
      planes[frames * bins + t * bins + k] = spec[(t * bins + k) * 2 + 1];
    }
  auto x = Tensor<float>::from({1, 2, frames, bins}, std::move(planes));
  auto [enhanced, l_ca] = net.forward(x);
  (void)l_ca;

  std::vector<float> inter(static_cast<size_t>(frames) * bins * 2);
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t k = 0; k < bins; ++k) {
      inter[(t * bins + k) * 2] = enhanced.data()[t * bins + k];
      inter[(t * bins + k) * 2 + 1] = enhanced.data()[frames * bins + t * bins + k];
    }
  dsp::Waveform out;
  out.sample_rate = dsp::kCanonicalRate;
  out.samples.resize(static_cast<size_t>(n));
  dsp::istft_core(inter.data(), frames, net.cfg.stft, n, out.samples.data());
  for (auto& s : out.samples) s = std::clamp(s, -1.0f, 1.0f);

  net.training = was_training;
  return out;
}

template struct CmcrNet<float>;
template struct CmcrNet<double>;
template Tensor<float> batch_input<float>(const data::Batch&, bool);
template Tensor<double> batch_input<double>(const data::Batch&, bool);
template LossBreakdown<float> loss_from_enhanced<float>(
    const data::Batch&, const Tensor<float>&, const Tensor<float>&,
    const nn::FrozenEncoder<float>&, const ModelConfig&);
template LossBreakdown<double> loss_from_enhanced<double>(
    const data::Batch&, const Tensor<double>&, const Tensor<double>&,
    const nn::FrozenEncoder<double>&, const ModelConfig&);
template LossBreakdown<float> total_loss<float>(const data::Batch&, CmcrNet<float>&,
                                                const nn::FrozenEncoder<float>&);
template LossBreakdown<double> total_loss<double>(const data::Batch&,
                                                  CmcrNet<double>&,
                                                  const nn::FrozenEncoder<double>&);

}  // namespace cmcr::model
