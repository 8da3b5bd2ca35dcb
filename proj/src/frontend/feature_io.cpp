// SPDX-License-Identifier: Apache-2.0
#include "ctkd/frontend/feature_io.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctkd/common/errors.hpp"

namespace ctkd::frontend {
namespace fs = std::filesystem;
namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IntegrityError(path + ": truncated feature file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_features(const std::string& path, const FeatureMatrix& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write feature file " + path);
  out.write("CTFE", 4);
  put_u32(out, kFeatureFileVersion);
  put_u32(out, static_cast<std::uint32_t>(features.frames));
  put_u32(out, static_cast<std::uint32_t>(features.dims));
  for (double v : features.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw InputError("failed writing feature file " + path);
}

FeatureMatrix read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open feature file " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "CTFE") throw FormatError(path + ": not a CTFE feature file");
  const auto version = get_u32(in, path);
  if (version != kFeatureFileVersion) {
    throw FormatError(path + ": unsupported feature file version " + std::to_string(version));
  }
  const auto frames = get_u32(in, path);
  const auto dims = get_u32(in, path);
  FeatureMatrix m(frames, dims);
  for (double& v : m.values) v = static_cast<double>(std::bit_cast<float>(get_u32(in, path)));
  return m;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    ManifestEntry e;
    if (!(ss >> e.id)) continue;
    if (!(ss >> e.feature_path)) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": missing feature path");
    }
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t pos = 0;
        const long v = std::stol(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        e.labels.push_back(static_cast<Token>(v));
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_no) + ": bad label '" + tok + "'");
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write manifest " + path);
  for (const auto& e : entries) {
    out << e.id << ' ' << e.feature_path;
    for (Token y : e.labels) out << ' ' << y;
    out << '\n';
  }
}

Dataset load_dataset(const std::string& manifest_path) {
  const fs::path base = fs::path(manifest_path).parent_path();
  Dataset data;
  for (auto& e : read_manifest(manifest_path)) {
    fs::path p(e.feature_path);
    if (p.is_relative()) p = base / p;
    data.push_back({e.id, read_features(p.string()), std::move(e.labels)});
  }
  return data;
}

std::string save_dataset(const Dataset& data, const std::string& dir, const std::string& name) {
  const fs::path root(dir);
  fs::create_directories(root / name);
  std::vector<ManifestEntry> entries;
  for (const auto& utt : data) {
    const std::string rel = name + "/" + utt.id + ".ctfe";
    write_features((root / rel).string(), utt.features);
    entries.push_back({utt.id, rel, utt.labels});
  }
  const std::string manifest = (root / (name + ".manifest")).string();
  write_manifest(manifest, entries);
  return manifest;
}

std::vector<double> read_pcm16(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open PCM file " + path);
  std::vector<double> out;
  unsigned char b[2];
  while (in.read(reinterpret_cast<char*>(b), 2)) {
    const auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(b[0] | (b[1] << 8)));
    out.push_back(static_cast<double>(v) / 32768.0);
  }
  return out;
}

}  // namespace ctkd::frontend
