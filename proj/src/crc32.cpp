// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/crc32.hpp"

#include <zlib.h>

#include <algorithm>
#include <limits>

namespace fastckpt {

std::uint32_t crc32(std::span<const std::byte> bytes, std::uint32_t crc) {
    uLong running = crc;
    constexpr std::size_t kMaxChunk = std::numeric_limits<uInt>::max();
    while (!bytes.empty()) {
        const std::size_t n = std::min(bytes.size(), kMaxChunk);
        running = ::crc32(running, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n));
        bytes = bytes.subspan(n);
    }
    return static_cast<std::uint32_t>(running);
}

}  // namespace fastckpt
