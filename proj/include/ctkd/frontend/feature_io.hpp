// SPDX-License-Identifier: Apache-2.0
//
// Feature file (".ctfe"), little-endian:
//   char[4] "CTFE" | u32 version (1) | u32 frames | u32 dims | frames*dims f32
//
// Manifest: one utterance per line,
//   <id> <feature path> [label ...]
// with feature paths relative to the manifest's directory unless absolute.
#pragma once

#include <string>
#include <vector>

#include "ctkd/frontend/features.hpp"

namespace ctkd::frontend {

inline constexpr std::uint32_t kFeatureFileVersion = 1;

void write_features(const std::string& path, const FeatureMatrix& features);
FeatureMatrix read_features(const std::string& path);

struct ManifestEntry {
  std::string id;
  std::string feature_path;
  TokenSeq labels;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

/// Reads a manifest and every feature file it names.
Dataset load_dataset(const std::string& manifest_path);
/// Writes <dir>/<name>.manifest and one feature file per utterance under <dir>/<name>/.
std::string save_dataset(const Dataset& data, const std::string& dir, const std::string& name);

/// Raw little-endian signed 16-bit PCM, scaled to [-1, 1).
std::vector<double> read_pcm16(const std::string& path);

}  // namespace ctkd::frontend
