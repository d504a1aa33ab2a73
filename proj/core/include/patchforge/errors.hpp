// Copyright (c) 2026 PatchForge Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace patchforge {

/// Base class for all patchforge errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Errors caused by bad user input (config values, missing files, unknown
/// keys). The CLI maps these to exit code 1; everything else exits 2.
class UserError : public Error {
 public:
  explicit UserError(const std::string& msg) : Error(msg) {}
};

}  // namespace patchforge
