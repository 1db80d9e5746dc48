// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmcr/dsp/stft.hpp"
#include "cmcr/nn/cm.hpp"
#include "cmcr/nn/cr.hpp"

namespace cmcr::model {

// Full model + training configuration. Defaults are the desk-scale setup;
// the paper-scale values (batch 16, 50 epochs) remain reachable through the
// config file. Serialized as `key = value` lines, '#' comments.
struct ModelConfig {
  // architecture
  std::vector<int> enc_channels = {2, 16, 32, 64, 128};  // real feature maps
  int kernel_t = 2;
  int kernel_f = 3;
  int num_cm = 3;
  dsp::StftConfig stft;

  // collaboration module
  double cm_n_rel = 0.08;
  double cm_n_irr_start = 0.16;
  double cm_reg_const = 0.0;

  // contrastive regularization
  double cr_eps = 1e-7;
  int cr_n_mels = 40;
  int cr_embed_dim = 64;

  // loss: total = mse + alpha * ca + beta * cr
  double alpha = 0.1;
  double beta = 0.05;
  bool mse_spec_domain = false;  // waveform-domain MSE by default

  // training
  double lr = 1e-4;
  int batch_size = 4;
  int epochs = 2;
  int64_t max_steps = 0;  // 0: run the configured epochs
  uint64_t seed = 0;
  int ckpt_every = 100;
  int loader_threads = 0;  // 1 enables the prefetch thread

  void validate() const;

  nn::CmConfig cm_config() const;
  nn::CrConfig cr_config() const;

  // Canonical `key = value` serialization (stable order).
  std::string canonical() const;

  // Fingerprint over the architecture fields only, so checkpoints stay
  // loadable when pure training knobs (alpha/beta/lr/...) differ.
  uint64_t arch_fingerprint() const;

  static ModelConfig from_text(const std::string& text);
  static ModelConfig load(const std::string& path);
  void save(const std::string& path) const;

  // Applies `key = value` overrides onto this config.
  void apply_line(const std::string& line);
};

}  // namespace cmcr::model
