// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key-value configuration files:
//
//   # comment
//   train.epochs = 4
//   padshift.mode = full
//
// Keys are dotted names; values are the rest of the line, trimmed.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace randpad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, std::string_view origin = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(std::string_view key) const;
  void set(std::string key, std::string value);
  /// Entries of `other` override entries here.
  void merge(const KeyValueConfig& other);

  std::optional<std::string> find(std::string_view key) const;
  std::string get_string(std::string_view key, std::string_view fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  /// Comma-separated list.
  std::vector<std::string> get_list(std::string_view key,
                                    const std::vector<std::string>& fallback) const;

  /// Canonical `key = value` lines in key order; hashing this gives the
  /// config hash recorded in manifests.
  std::string dump() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

std::string trim(std::string_view s);
std::vector<std::string> split_list(std::string_view s, char sep = ',');

}  // namespace randpad
