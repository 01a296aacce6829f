// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace fastckpt {

/// CRC-32 (IEEE 802.3, reflected 0xEDB88320). Pass a previous result as
/// `crc` to continue a running checksum across pieces.
std::uint32_t crc32(std::span<const std::byte> bytes, std::uint32_t crc = 0);

}  // namespace fastckpt
