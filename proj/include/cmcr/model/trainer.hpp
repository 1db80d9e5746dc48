// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "cmcr/model/checkpoint.hpp"

namespace cmcr::model {

struct TrainOptions {
  std::string manifest_path;
  std::string out_dir;
  std::string resume_from;  // checkpoint path; empty for a fresh run
};

struct TrainSummary {
  int64_t steps_run = 0;
  std::string final_checkpoint;
  std::string log_path;
  double first_total = 0.0;
  double last_total = 0.0;
};

// Seed-deterministic training loop: the batch schedule is a pure function of
// (seed, step), so a resumed run continues the exact trajectory of an
// unbroken one. Appends one JSONL record {step, total, mse, ca, cr} per step
// to <out_dir>/train_log.jsonl and writes periodic + final checkpoints.
// Non-finite losses abort with the offending component named.
TrainSummary train(const ModelConfig& cfg, const TrainOptions& opts);

// Checkpoint-driven inference: the architecture comes from the checkpoint's
// embedded config. Any readable WAV is ingested at 16 kHz; the output length
// matches the input.
void enhance_file(const std::string& in_wav, const std::string& ckpt_path,
                  const std::string& out_wav);

// Runs one file through the net and serializes every CM's S / M_r / M_i
// (batch item 0) in the checkpoint array container.
void dump_attention(const std::string& in_wav, const std::string& ckpt_path,
                    const std::string& out_path);

}  // namespace cmcr::model
