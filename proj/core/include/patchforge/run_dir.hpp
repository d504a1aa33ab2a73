// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

namespace patchforge {

/// $PATCHFORGE_RUNS, or ./runs when unset.
std::filesystem::path runs_root();

/// Create runs_root()/<UTC timestamp>-<subcommand>/ (a numeric suffix keeps
/// same-second runs distinct) and point the `latest` file at it. Artifact
/// contents never embed the timestamp, so re-runs produce identical bytes.
std::filesystem::path create_run_dir(const std::string& subcommand);

/// The directory the `latest` pointer file names. Throws UserError when no
/// run has happened yet.
std::filesystem::path latest_run_dir();

}  // namespace patchforge
