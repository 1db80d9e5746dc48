// Copyright 2026 CMCR-Net authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmcr/model/net.hpp"
#include "cmcr/nn/adam.hpp"

namespace cmcr::model {

// Shared array container: a JSON manifest (names, shapes, float offsets,
// free-form metadata) followed by a concatenated little-endian float32 blob.
// Checkpoints and attention dumps both use it. Writes are atomic
// (temp file + rename).
struct ArrayEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct ArrayFile {
  std::string meta_json;  // serialized metadata object
  std::vector<ArrayEntry> entries;

  void save(const std::string& path) const;
  static ArrayFile load(const std::string& path);
  const ArrayEntry* find(const std::string& name) const;
};

// Checkpoint layout: per parameter `p`, entries `p`, `p.adam_m`, `p.adam_v`;
// batch-norm running stats ride as `buffer:<name>`. Metadata carries the
// full canonical config, the architecture fingerprint and the step count.
void save_checkpoint(const std::string& path, CmcrNet<float>& net,
                     Adam<float>& opt);

struct CheckpointMeta {
  ModelConfig config;
  uint64_t arch_fingerprint = 0;
  int64_t step_count = 0;
};

CheckpointMeta read_checkpoint_meta(const std::string& path);

// Restores parameters and buffers into a net whose architecture fingerprint
// matches the checkpoint (rejected otherwise). `opt`, when given, receives
// the moment buffers and step count.
CheckpointMeta load_checkpoint(const std::string& path, CmcrNet<float>& net,
                               Adam<float>* opt);

}  // namespace cmcr::model
