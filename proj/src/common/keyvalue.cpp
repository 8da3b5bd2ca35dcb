// SPDX-License-Identifier: Apache-2.0
#include "ctkd/common/keyvalue.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ctkd/common/errors.hpp"

namespace ctkd {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-')) {
      return false;
    }
  }
  return true;
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": invalid key '" + key + "'", key);
    }
    kv.entries_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KeyValues::apply_override(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  std::string key = trim(assignment.substr(0, eq));
  if (!valid_key(key)) throw ConfigError("invalid override key '" + key + "'", key);
  entries_[key] = trim(assignment.substr(eq + 1));
}

void KeyValues::set(const std::string& key, const std::string& value) { entries_[key] = value; }
void KeyValues::erase(const std::string& key) { entries_.erase(key); }

bool KeyValues::has(const std::string& key) const { return entries_.count(key) != 0; }

const std::string& KeyValues::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("missing required key '" + key + "'", key);
  used_.insert(key);
  return it->second;
}

std::string KeyValues::get_string(const std::string& key) const { return raw(key); }

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

std::int64_t KeyValues::get_int(const std::string& key) const {
  const std::string& v = raw(key);
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'", key);
  }
  return out;
}

std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double KeyValues::get_double(const std::string& key) const {
  const std::string& v = raw(key);
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'", key);
  }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KeyValues::get_bool(const std::string& key) const {
  const std::string& v = raw(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'", key);
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<std::string> KeyValues::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::int64_t> KeyValues::get_int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& item : get_list(key)) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError("key '" + key + "' expects a list of integers, got '" + item + "'", key);
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> KeyValues::keys_with_prefix(const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.push_back(it->first);
  }
  return out;
}

void KeyValues::reject_unused() const {
  for (const auto& [key, value] : entries_) {
    if (!used_.count(key)) throw ConfigError("unknown config key '" + key + "'", key);
  }
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [key, value] : entries_) out += key + " = " + value + "\n";
  return out;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace ctkd
