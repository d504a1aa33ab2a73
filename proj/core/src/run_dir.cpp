// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#include "patchforge/run_dir.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include <fmt/format.h>

#include "patchforge/errors.hpp"

namespace patchforge {

std::filesystem::path runs_root() {
  const char* env = std::getenv("PATCHFORGE_RUNS");
  return env && *env ? env : "runs";
}

std::filesystem::path create_run_dir(const std::string& subcommand) {
  const std::filesystem::path root = runs_root();
  std::filesystem::create_directories(root);

  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  const std::string stamp = fmt::format("{:04}{:02}{:02}-{:02}{:02}{:02}", utc.tm_year + 1900, utc.tm_mon + 1,
                                        utc.tm_mday, utc.tm_hour, utc.tm_min, utc.tm_sec);

  std::filesystem::path dir = root / fmt::format("{}-{}", stamp, subcommand);
  for (int suffix = 2; std::filesystem::exists(dir); ++suffix) {
    dir = root / fmt::format("{}-{}-{}", stamp, subcommand, suffix);
  }
  std::filesystem::create_directories(dir);

  std::ofstream latest(root / "latest", std::ios::trunc);
  if (latest) latest << dir.filename().string() << '\n';
  return dir;
}

std::filesystem::path latest_run_dir() {
  const std::filesystem::path pointer = runs_root() / "latest";
  std::ifstream in(pointer);
  std::string name;
  if (!in || !std::getline(in, name) || name.empty()) {
    throw UserError(fmt::format("no runs recorded yet ('{}' missing); run a subcommand first", pointer.string()));
  }
  return runs_root() / name;
}

}  // namespace patchforge
