// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli_app.hpp"

int main(int argc, char** argv) {
    return fastckpt::cli::run(argc, argv, std::cout, std::cerr);
}
