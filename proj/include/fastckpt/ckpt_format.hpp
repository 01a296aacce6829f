// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container. A checkpoint is an ordered list of tensor records
// laid out as one little-endian byte stream:
//
//   "FPCK" | version u32 = 1 | record_count u64 | record... | crc32 u32
//   record := name_len u16 | name | dtype u8 | ndim u8 | dim u64 x ndim
//             | payload_len u64 | payload
//
// The trailing CRC covers every byte before it. Parallel saves cut this
// stream into contiguous byte ranges (shards) described by a JSON manifest;
// loading reads the shards back, checks each shard CRC and reassembles.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fastckpt::format {

enum class DType : std::uint8_t {
    F16 = 0,
    F32 = 1,
    F64 = 2,
    I8 = 3,
    I32 = 4,
    I64 = 5,
};

std::size_t dtype_size(DType dtype);
std::string_view dtype_name(DType dtype);
std::optional<DType> parse_dtype(std::string_view name);

struct TensorRecord {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::uint64_t> shape;
    std::vector<std::byte> payload;

    /// product(shape) * dtype_size; throws Error(Format) on overflow.
    std::uint64_t expected_payload_bytes() const;
    void validate() const;

    bool operator==(const TensorRecord&) const = default;
};

struct RecordSpan {
    std::uint64_t offset = 0;
    std::uint64_t length = 0;

    bool operator==(const RecordSpan&) const = default;
};

struct SerializedStream {
    std::vector<std::byte> bytes;
    /// Byte range of each record inside `bytes`. Empty for streams that were
    /// reassembled from shards without being parsed.
    std::vector<RecordSpan> record_offsets;

    std::span<const std::byte> view() const { return bytes; }
};

inline constexpr std::array<char, 4> kMagic{'F', 'P', 'C', 'K'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint64_t kHeaderBytes = 16;
inline constexpr std::uint64_t kFooterBytes = 4;
inline constexpr std::size_t kMaxNameBytes = 0xFFFF;
inline constexpr std::size_t kMaxDims = 0xFF;

std::uint64_t record_bytes(const TensorRecord& record);
std::uint64_t serialized_size(std::span<const TensorRecord> records);

SerializedStream serialize(std::span<const TensorRecord> records);
std::vector<TensorRecord> deserialize(std::span<const std::byte> bytes);

// Aligned prefix/suffix split -------------------------------------------

inline constexpr std::uint64_t kDefaultAlignment = 512;

struct AlignedSplit {
    std::uint64_t prefix_len = 0;
    std::uint64_t suffix_len = 0;
    std::uint64_t alignment = kDefaultAlignment;
};

bool is_valid_alignment(std::uint64_t alignment);
/// Throws Error(Config) unless alignment is a power of two >= 512.
void require_valid_alignment(std::uint64_t alignment);
AlignedSplit split_aligned(std::uint64_t total, std::uint64_t alignment = kDefaultAlignment);

// Shard manifest -----------------------------------------------------------

struct ShardEntry {
    std::uint32_t writer_id = 0;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    std::uint32_t crc32 = 0;

    bool operator==(const ShardEntry&) const = default;
};

struct ShardManifest {
    std::uint32_t format_version = 1;
    std::uint64_t total_bytes = 0;
    std::uint64_t alignment = kDefaultAlignment;
    std::vector<ShardEntry> shards;

    /// Shards sorted by offset, contiguous from 0, summing to total_bytes.
    /// Throws Error(Manifest) naming the first offending shard.
    void validate() const;

    std::string to_json() const;
    static ShardManifest from_json(std::string_view text);

    bool operator==(const ShardManifest&) const = default;
};

/// Checks `bytes` against the manifest entry; throws CorruptionError.
void verify_shard(const ShardEntry& entry, std::span<const std::byte> bytes);

/// Concatenates shards (indexed like manifest.shards) after validating the
/// manifest and every shard checksum.
SerializedStream assemble(std::span<const std::vector<std::byte>> shards, const ShardManifest& manifest);

// On-disk layout -----------------------------------------------------------

/// `<stem>.shard-<i>-of-<k>`
std::string shard_file_name(std::string_view stem, std::size_t index, std::size_t count);
/// `<dir>/<stem>.manifest.json`
std::filesystem::path manifest_path(const std::filesystem::path& dir, std::string_view stem);
/// Recovers `<stem>` from a path produced by manifest_path().
std::string stem_from_manifest_path(const std::filesystem::path& path);

ShardManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const ShardManifest& manifest);

/// Reads every shard named by the manifest with up to `reader_count`
/// concurrent readers, verifies shard checksums and returns the assembled
/// stream bytes. Missing or short shard files raise LoadError.
SerializedStream load_stream_parallel(const std::filesystem::path& manifest_file, unsigned reader_count);

std::vector<TensorRecord> load_parallel(const std::filesystem::path& manifest_file, unsigned reader_count);

}  // namespace fastckpt::format
