// SPDX-License-Identifier: Apache-2.0
#include "ctkd/model/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctkd/common/errors.hpp"

namespace ctkd::model {
namespace {

constexpr char kMagic[4] = {'C', 'T', 'K', 'D'};

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw IntegrityError(origin_ + ": truncated checkpoint while reading " + what + " at byte " +
                           std::to_string(pos_));
    }
  }

 private:
  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::of(const ConformerTransducer& model) {
  Checkpoint c;
  c.config = model.config();
  c.parameters = model.snapshot();
  return c;
}

ConformerTransducer Checkpoint::instantiate() const { return ConformerTransducer::from_parameters(config, parameters); }

std::string serialize_checkpoint(const Checkpoint& ck) {
  KeyValues kv;
  ck.config.to_keyvalues(kv);
  kv.set("meta.step", std::to_string(ck.step));
  if (!ck.rng_state.empty()) kv.set("meta.rng_state", ck.rng_state);
  for (const auto& [k, v] : ck.metadata) {
    if (k == "step" || k == "rng_state") throw ContractError("metadata key '" + k + "' is reserved");
    if (v.find_first_of("#\n") != std::string::npos) {
      throw ContractError("metadata value for '" + k + "' contains '#' or a newline");
    }
    kv.set("meta." + k, v);
  }
  const std::string blob = kv.to_text();

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, blob.size());
  out += blob;
  for (const auto& [name, t] : ck.parameters) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t e : t.shape()) put<std::uint64_t>(out, e);
    for (double v : t.data()) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 4 || bytes.compare(0, 4, kMagic, 4) != 0) {
    throw FormatError(origin + ": not a checkpoint (bad magic)");
  }
  Reader in(bytes, origin);
  in.take(4, "magic");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto blob_len = in.get<std::uint64_t>("config length");
  const std::string blob = in.take(blob_len, "config");

  Checkpoint ck;
  KeyValues kv = KeyValues::parse(blob, origin);
  ck.config = ModelConfig::from_keyvalues(kv);
  for (const auto& key : kv.keys_with_prefix("meta.")) {
    const std::string k = key.substr(5);
    if (k == "step") {
      ck.step = static_cast<std::uint64_t>(kv.get_int(key));
    } else if (k == "rng_state") {
      ck.rng_state = kv.get_string(key);
    } else {
      ck.metadata[k] = kv.get_string(key);
    }
  }

  while (!in.at_end()) {
    const auto name_len = in.get<std::uint32_t>("name length");
    std::string name = in.take(name_len, "name");
    const auto rank = in.get<std::uint8_t>("rank");
    if (rank == 0) throw IntegrityError(origin + ": tensor '" + name + "' has rank 0");
    ad::Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& e : shape) {
      e = in.get<std::uint64_t>("extent");
      if (e == 0 || count > (std::uint64_t{1} << 40) / e) {
        throw IntegrityError(origin + ": tensor '" + name + "' has an invalid extent");
      }
      count *= e;
    }
    in.need(count * 4, "tensor payload");
    std::vector<double> values(count);
    for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(in.get<std::uint32_t>("value")));
    ck.parameters.emplace_back(std::move(name), ad::Tensor(std::move(shape), std::move(values)));
  }
  // Rejects missing, extra or misshapen tensors.
  (void)ConformerTransducer::from_parameters(ck.config, ck.parameters);
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const ConformerTransducer& model, const std::string& path) {
  save_checkpoint(Checkpoint::of(model), path);
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  Checkpoint ck = deserialize_checkpoint(ss.str(), path);
  if (expected && !(ck.config == *expected)) {
    throw ConfigError(path + ": checkpoint configuration does not match the expected model:\n--- stored\n" +
                      ck.config.canonical_text() + "--- expected\n" + expected->canonical_text());
  }
  return ck;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace ctkd::model
