// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fastckpt {

/// "4096", "512B", "16KiB", "2MiB", "1GiB", "1TiB". Throws Error(Config).
std::uint64_t parse_size(std::string_view text);

/// Comma-separated sizes; an item "a..b" expands to a, 2a, 4a, ... <= b.
std::vector<std::uint64_t> parse_size_list(std::string_view text);

/// Non-negative count written as an integer or in scientific notation
/// ("1.3e9"). The value must be integral. Throws Error(Config).
std::uint64_t parse_count(std::string_view text);

}  // namespace fastckpt
