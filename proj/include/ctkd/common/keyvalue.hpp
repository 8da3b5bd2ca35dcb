// SPDX-License-Identifier: Apache-2.0
//
// Flat configuration format shared by every tool:
//
//   file    := { line '\n' }
//   line    := ws [ key ws '=' ws value ] ws [ '#' comment ]
//   key     := [A-Za-z0-9_.-]+        (dotted path, e.g. model.encoder.num_layers)
//   value   := any characters except '#', surrounding whitespace trimmed
//
// Blank lines and comment-only lines are ignored. A key may appear more than
// once; the last occurrence wins. Lists are comma separated.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ctkd {

class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValues load(const std::string& path);

  /// Applies a `key=value` override. Throws ConfigError when malformed.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  void erase(const std::string& key);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  /// Keys starting with `prefix`, in sorted order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Marks a key as understood without reading it.
  void touch(const std::string& key) const { used_.insert(key); }
  /// Throws ConfigError naming the first key no getter has read.
  void reject_unused() const;

  /// Sorted `key = value` lines.
  std::string to_text() const;

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace ctkd
