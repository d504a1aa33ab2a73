// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/ini.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {
namespace {

std::string trim(const std::string& s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  auto b = std::find_if_not(s.begin(), s.end(), is_space);
  auto e = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
  return b < e ? std::string(b, e) : std::string();
}

std::string dotted(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

}  // namespace

IniFile IniFile::parse(const std::string& text) {
  IniFile ini;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw UserError(fmt::format("config line {}: malformed section header '{}'", lineno, line));
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw UserError(fmt::format("config line {}: empty section name", lineno));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw UserError(fmt::format("config line {}: expected 'key = value', got '{}'", lineno, line));
    }
    Entry entry;
    entry.section = section;
    entry.key = trim(line.substr(0, eq));
    entry.value = trim(line.substr(eq + 1));
    entry.line = lineno;
    if (entry.key.empty()) throw UserError(fmt::format("config line {}: empty key", lineno));
    ini.entries_.push_back(std::move(entry));
  }
  return ini;
}

IniFile IniFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const IniFile::Entry* IniFile::find(const std::string& section, const std::string& key) const {
  const Entry* hit = nullptr;
  for (const Entry& e : entries_) {
    if (e.section == section && e.key == key) hit = &e;  // last one wins
  }
  return hit;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string IniFile::get_string(const std::string& section, const std::string& key,
                                const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : fallback;
}

int64_t IniFile::get_int(const std::string& section, const std::string& key, int64_t fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), out);
  if (ec != std::errc{} || ptr != e->value.data() + e->value.size()) {
    throw UserError(fmt::format("config line {}: {} must be an integer, got '{}'", e->line,
                                dotted(section, key), e->value));
  }
  return out;
}

uint64_t IniFile::get_uint(const std::string& section, const std::string& key, uint64_t fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(e->value.data(), e->value.data() + e->value.size(), out);
  if (ec != std::errc{} || ptr != e->value.data() + e->value.size()) {
    throw UserError(fmt::format("config line {}: {} must be a non-negative integer, got '{}'", e->line,
                                dotted(section, key), e->value));
  }
  return out;
}

double IniFile::get_double(const std::string& section, const std::string& key, double fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  try {
    size_t pos = 0;
    const double out = std::stod(e->value, &pos);
    if (pos != e->value.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw UserError(fmt::format("config line {}: {} must be a number, got '{}'", e->line, dotted(section, key),
                                e->value));
  }
}

bool IniFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const Entry* e = find(section, key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  throw UserError(fmt::format("config line {}: {} must be a boolean (true/false), got '{}'", e->line,
                              dotted(section, key), e->value));
}

}  // namespace patchforge
