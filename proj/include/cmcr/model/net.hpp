// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "cmcr/data/mixer.hpp"
#include "cmcr/model/config.hpp"
#include "cmcr/nn/cm.hpp"
#include "cmcr/nn/cr.hpp"
#include "cmcr/nn/layers.hpp"

// Encoder -> collaboration modules -> decoder with complex skip
// concatenation. Four complex conv stages halve the frequency axis each
// (time is preserved, causal padding); the stacked collaboration modules
// work on the bottleneck; four complex deconv stages mirror the encoder,
// each consuming the channel-concatenated skip. The output layer is linear.

namespace cmcr::model {

template <class T>
struct CmcrNet {
  ModelConfig cfg;
  std::vector<int64_t> f_dims;  // frequency grid per stage, f_dims[0] = bins
  std::vector<nn::ComplexConv2d<T>> enc;
  std::vector<nn::BatchNorm2d<T>> enc_bn;
  std::vector<nn::CollaborationModule<T>> cms;
  std::vector<nn::ComplexDeconv2d<T>> dec;
  std::vector<nn::BatchNorm2d<T>> dec_bn;  // decoder stages 0..2; the output
                                           // stage has no BN and no ELU
  bool training = true;

  void init(const ModelConfig& config);

  // x: [B, 2, T, bins] -> (enhanced [B, 2, T, bins], mean CM loss).
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x);

  std::vector<nn::NamedParam<T>> params();

  struct NamedBuffer {
    std::string name;
    std::vector<T>* data;
  };
  std::vector<NamedBuffer> buffers();
};

// [B, T, F, 2] interleaved batch storage -> [B, 2, T, F] channel planes.
template <class T>
Tensor<T> batch_input(const data::Batch& b, bool clean);

template <class T>
struct LossBreakdown {
  Tensor<T> total, mse, ca, cr;
};

// Loss terms for a given enhanced spec (lets tests inject an oracle spec).
// Padded frames and samples are excluded from every term.
template <class T>
LossBreakdown<T> loss_from_enhanced(const data::Batch& batch,
                                    const Tensor<T>& enhanced,
                                    const Tensor<T>& l_ca,
                                    const nn::FrozenEncoder<T>& encoder,
                                    const ModelConfig& cfg);

template <class T>
LossBreakdown<T> total_loss(const data::Batch& batch, CmcrNet<T>& net,
                            const nn::FrozenEncoder<T>& encoder);

// stft -> forward -> istft trimmed to the input length, clamped to [-1, 1].
dsp::Waveform enhance_waveform(const dsp::Waveform& in, CmcrNet<float>& net);

}  // namespace cmcr::model
