// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace patchforge {

/// Minimal INI reader: `[section]` headers, `key = value` pairs, full-line
/// comments starting with `#` or `;`. Keys before any section header live
/// in the global (empty-name) section. Later duplicates override earlier
/// ones; entries() keeps every occurrence for unknown-key validation.
class IniFile {
 public:
  struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
  };

  static IniFile parse(const std::string& text);
  static IniFile load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;

  /// Typed getters; conversion failures name `section.key` and the line.
  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const;
  uint64_t get_uint(const std::string& section, const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  const std::vector<Entry>& entries() const { return entries_; }

 private:
  const Entry* find(const std::string& section, const std::string& key) const;

  std::vector<Entry> entries_;
};

}  // namespace patchforge
