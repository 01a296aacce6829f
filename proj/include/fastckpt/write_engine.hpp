// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Staged checkpoint writer. Serialized bytes are copied into aligned,
// page-locked staging buffers (standing in for the accelerator -> host DMA
// leg) and flushed to the destination with direct I/O. Everything up to the
// last alignment boundary goes down the direct path in alignment-multiple
// requests; the sub-alignment tail is appended through the page cache.
//
// In double-buffer mode two staging buffers form a depth-2 pipeline: the
// caller fills one while a writer thread drains the other.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fastckpt/ckpt_format.hpp"
#include "fastckpt/partition_planner.hpp"

namespace fastckpt::io {

enum class WriteMode { SingleBuffer, DoubleBuffer };

std::string_view to_string(WriteMode mode);
/// "single" / "double"
std::optional<WriteMode> parse_write_mode(std::string_view text);

/// Aligned host memory the device writes from. Locking is best effort;
/// locked() reports whether mlock succeeded.
class StagingBuffer {
public:
    StagingBuffer(std::uint64_t capacity, std::uint64_t alignment, bool lock_memory = true);
    StagingBuffer(StagingBuffer&& other) noexcept;
    StagingBuffer& operator=(StagingBuffer&& other) noexcept;
    StagingBuffer(const StagingBuffer&) = delete;
    StagingBuffer& operator=(const StagingBuffer&) = delete;
    ~StagingBuffer();

    std::span<std::byte> data() { return {data_, static_cast<std::size_t>(capacity_)}; }
    std::uint64_t capacity() const { return capacity_; }
    std::uint64_t alignment() const { return alignment_; }
    bool locked() const { return locked_; }

private:
    void release() noexcept;

    std::byte* data_ = nullptr;
    std::uint64_t capacity_ = 0;
    std::uint64_t alignment_ = 0;
    bool locked_ = false;
};

// Pending-byte queue ---------------------------------------------------------

struct FlushEvent {
    std::uint64_t offset = 0;  // position in the overall stream
    std::uint64_t length = 0;

    bool operator==(const FlushEvent&) const = default;
};

/// Where the queue gets buffer space from and where full buffers go.
class FlushSink {
public:
    virtual ~FlushSink() = default;
    /// Buffer to fill next; its size is the queue threshold.
    virtual std::span<std::byte> acquire() = 0;
    /// Hands a filled buffer prefix to the device. The buffer returned by the
    /// matching acquire() must not be touched by the queue afterwards.
    virtual void flush(const FlushEvent& event, std::span<const std::byte> data) = 0;
};

/// Aggregates serialized tensor bytes and flushes them in threshold-sized
/// pieces, in arrival order. One tensor may span several flushes and one
/// flush may carry several tensors.
class PendingQueue {
public:
    struct Tail {
        std::optional<FlushEvent> aligned;  // last direct flush, if any
        std::uint64_t suffix_offset = 0;
        std::vector<std::byte> suffix;      // < alignment bytes
    };

    PendingQueue(std::uint64_t threshold, std::uint64_t alignment, FlushSink& sink);

    std::vector<FlushEvent> append(std::span<const std::byte> bytes);
    /// Flushes the aligned part of what is still queued and returns the rest.
    Tail finish();

    std::uint64_t queued() const { return queued_; }
    std::uint64_t appended() const { return base_offset_ + queued_; }
    std::uint64_t threshold() const { return threshold_; }

private:
    std::uint64_t threshold_;
    std::uint64_t alignment_;
    FlushSink& sink_;
    std::span<std::byte> current_;
    std::uint64_t queued_ = 0;
    std::uint64_t base_offset_ = 0;  // stream offset of current_[0]
};

/// Sink backed by one reusable buffer that records every flush. Useful to
/// drive a PendingQueue without a device.
class CollectingSink : public FlushSink {
public:
    explicit CollectingSink(std::uint64_t capacity) : buffer_(capacity) {}

    std::span<std::byte> acquire() override { return buffer_; }
    void flush(const FlushEvent& event, std::span<const std::byte> data) override {
        events.push_back(event);
        bytes.insert(bytes.end(), data.begin(), data.end());
    }

    std::vector<FlushEvent> events;
    std::vector<std::byte> bytes;

private:
    std::vector<std::byte> buffer_;
};

// Engine ------------------------------------------------------------------------

struct WriteOptions {
    WriteMode mode = WriteMode::DoubleBuffer;
    std::uint64_t buffer_bytes = 8ull << 20;  // per staging buffer
    std::uint64_t alignment = format::kDefaultAlignment;
    std::uint32_t queue_depth = 8;            // concurrent direct sub-requests per flush
    bool direct = true;                       // try O_DIRECT
    bool lock_memory = true;
    bool trace = false;

    /// Throws Error(Config) for bad alignment, buffer or queue depth.
    void validate() const;
};

enum class IoPath { Direct, Buffered };

struct IoRequest {
    IoPath path = IoPath::Direct;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
};

/// One staging-buffer cycle. Times are seconds since the write started.
struct ChunkTrace {
    std::uint64_t index = 0;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
    int slot = 0;
    double copy_begin = 0.0;
    double copy_end = 0.0;
    double write_begin = 0.0;
    double write_end = 0.0;
};

struct EngineTrace {
    std::vector<ChunkTrace> chunks;
    std::vector<IoRequest> requests;
};

struct EngineStats {
    std::uint64_t bytes_written = 0;
    double wall_seconds = 0.0;
    double throughput = 0.0;  // bytes / wall_seconds
    std::uint64_t direct_write_count = 0;    // staging-buffer flush cycles
    std::uint64_t buffered_write_count = 0;  // sub-alignment tail writes
    std::uint64_t direct_request_count = 0;
    bool fallback = false;  // direct I/O was unavailable, page cache used
    bool locked = false;    // staging memory was page-locked
    EngineTrace trace;      // filled when WriteOptions::trace
};

EngineStats write_checkpoint(std::span<const std::byte> stream, const std::filesystem::path& dest,
                             const WriteOptions& options);

/// Feeds the stream to the queue record by record, the way tensors arrive
/// from a serializer.
EngineStats write_checkpoint(const format::SerializedStream& stream, const std::filesystem::path& dest,
                             const WriteOptions& options);

/// Generic form: the pieces are appended in order.
EngineStats write_pieces(std::span<const std::span<const std::byte>> pieces, const std::filesystem::path& dest,
                         const WriteOptions& options);

// Sharded save ---------------------------------------------------------------

struct SaveResult {
    format::ShardManifest manifest;
    std::filesystem::path manifest_file;
    std::vector<EngineStats> writer_stats;  // indexed like plan.assignments
    double wall_seconds = 0.0;
};

/// Each plan assignment is written by its own engine instance on its own
/// thread to `<dir>/<stem>.shard-<i>-of-<k>`; the manifest is published
/// once every shard is durable.
SaveResult save_sharded(std::span<const std::byte> stream, const plan::PartitionPlan& plan,
                        const std::filesystem::path& dir, std::string_view stem, const WriteOptions& options);

// Benchmark ------------------------------------------------------------------

struct BenchConfig {
    std::filesystem::path scratch_dir;
    std::vector<std::uint64_t> sizes;
    std::vector<std::uint64_t> buffer_sizes;
    std::vector<WriteMode> modes;
    std::uint32_t repeats = 1;
    std::uint64_t alignment = format::kDefaultAlignment;
    std::uint32_t queue_depth = 8;
    bool direct = true;
    std::uint64_t seed = 1;
};

struct BenchRow {
    std::uint64_t size_bytes = 0;
    std::uint64_t buffer_bytes = 0;
    WriteMode mode = WriteMode::SingleBuffer;
    std::uint32_t repeat = 0;
    EngineStats stats;
};

/// One row per (size, buffer, mode, repeat). Each run writes a fresh file
/// that is synced before the clock stops and deleted afterwards.
std::vector<BenchRow> bench_write(const BenchConfig& config);

inline constexpr std::string_view kBenchCsvHeader =
    "size_bytes,buffer_bytes,mode,repeat,wall_seconds,throughput_bps,direct_writes,buffered_writes,fallback";

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows);

}  // namespace fastckpt::io
