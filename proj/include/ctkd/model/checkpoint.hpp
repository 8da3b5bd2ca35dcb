// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout (little-endian):
//
//   "CTKD" | u32 version | u64 blob length | blob
//   repeated { u32 name length | name | u8 rank | u64 extent * rank | f32 * numel }
//
// The blob is the canonical text of the ModelConfig (`model.*` lines)
// followed by training metadata as `meta.*` lines, sorted by key.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "ctkd/model/config.hpp"
#include "ctkd/model/transducer.hpp"

namespace ctkd::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  NamedTensors parameters;
  std::uint64_t step = 0;
  std::string rng_state;                        // textual engine state, may be empty
  std::map<std::string, std::string> metadata;  // stored as meta.<key>

  static Checkpoint of(const ConformerTransducer& model);
  ConformerTransducer instantiate() const;
};

/// Writes to `path` through a temporary file and rename.
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
void save_checkpoint(const ConformerTransducer& model, const std::string& path);

/// Reads and validates a checkpoint. With `expected`, a different stored
/// configuration is rejected with ConfigError.
Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = std::nullopt);

/// Serialized bytes, as written by save_checkpoint.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

/// FNV-1a 64 over the file contents, rendered as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace ctkd::model
