// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

#include "fastckpt/error.hpp"

namespace fastckpt::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitIo = 3,
    kExitVerify = 4,
};

int exit_code_for(ErrorKind kind);

/// Entry point shared by the executable and the tests. argv[0] is the
/// program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fastckpt::cli
