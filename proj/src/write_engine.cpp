// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/write_engine.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/statvfs.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <exception>
#include <functional>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

#include "fastckpt/crc32.hpp"
#include "fastckpt/error.hpp"
#include "posix_file.hpp"

namespace fastckpt::io {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kPageBytes = 4096;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

[[noreturn]] void config_error(const std::string& what) {
    throw Error(ErrorKind::Config, what);
}

// Runs a batch of independent tasks on a fixed set of helper threads plus the
// calling thread. Used to keep several direct requests in flight per flush.
class RequestPool {
public:
    explicit RequestPool(unsigned helpers) {
        for (unsigned i = 0; i < helpers; ++i) {
            threads_.emplace_back([this] { helper_loop(); });
        }
    }

    RequestPool(const RequestPool&) = delete;
    RequestPool& operator=(const RequestPool&) = delete;

    ~RequestPool() {
        {
            std::lock_guard lock(mu_);
            stop_ = true;
        }
        work_cv_.notify_all();
    }

    void run(std::size_t count, const std::function<void(std::size_t)>& task) {
        if (threads_.empty() || count <= 1) {
            for (std::size_t i = 0; i < count; ++i) {
                task(i);
            }
            return;
        }
        {
            std::lock_guard lock(mu_);
            task_ = &task;
            next_ = 0;
            count_ = count;
            remaining_ = count;
            error_ = nullptr;
        }
        work_cv_.notify_all();
        std::unique_lock lock(mu_);
        while (next_ < count_) {
            const auto i = next_++;
            lock.unlock();
            execute(i);
            lock.lock();
        }
        done_cv_.wait(lock, [this] { return remaining_ == 0; });
        task_ = nullptr;
        if (error_) {
            std::rethrow_exception(error_);
        }
    }

private:
    void execute(std::size_t i) {
        std::exception_ptr err;
        try {
            (*task_)(i);
        } catch (...) {
            err = std::current_exception();
        }
        std::lock_guard lock(mu_);
        if (err && !error_) {
            error_ = err;
        }
        if (--remaining_ == 0) {
            done_cv_.notify_all();
        }
    }

    void helper_loop() {
        std::unique_lock lock(mu_);
        for (;;) {
            work_cv_.wait(lock, [this] { return stop_ || (task_ != nullptr && next_ < count_); });
            if (stop_) {
                return;
            }
            const auto i = next_++;
            lock.unlock();
            execute(i);
            lock.lock();
        }
    }

    std::mutex mu_;
    std::condition_variable work_cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t)>* task_ = nullptr;
    std::size_t next_ = 0;
    std::size_t count_ = 0;
    std::size_t remaining_ = 0;
    bool stop_ = false;
    std::exception_ptr error_;
    std::vector<std::jthread> threads_;
};

// One engine run: owns the destination descriptor, the staging buffers and,
// in double-buffer mode, the writer thread that drains them.
class StagedWriter final : public FlushSink {
public:
    StagedWriter(const std::filesystem::path& dest, const WriteOptions& options)
        : options_(options), start_(Clock::now()), pool_(options.queue_depth > 1 ? options.queue_depth - 1 : 0) {
        open_destination(dest);
        const int slots = options.mode == WriteMode::DoubleBuffer ? 2 : 1;
        bool all_locked = true;
        for (int i = 0; i < slots; ++i) {
            buffers_.emplace_back(options.buffer_bytes, options.alignment, options.lock_memory);
            all_locked = all_locked && buffers_.back().locked();
            free_slots_.push_back(i);
        }
        stats_.locked = all_locked;
        if (options.mode == WriteMode::DoubleBuffer) {
            writer_ = std::jthread([this] { writer_loop(); });
        }
    }

    ~StagedWriter() override {
        if (writer_.joinable()) {
            close_pipeline();
        }
    }

    std::span<std::byte> acquire() override {
        std::unique_lock lock(mu_);
        slot_cv_.wait(lock, [this] { return !free_slots_.empty() || error_; });
        if (error_) {
            std::rethrow_exception(error_);
        }
        current_slot_ = free_slots_.front();
        free_slots_.pop_front();
        current_copy_begin_ = seconds_since(start_);
        return buffers_[static_cast<std::size_t>(current_slot_)].data();
    }

    void flush(const FlushEvent& event, std::span<const std::byte> data) override {
        Job job{current_slot_, event, data, {}};
        job.trace.index = chunk_index_++;
        job.trace.offset = event.offset;
        job.trace.length = event.length;
        job.trace.slot = current_slot_;
        job.trace.copy_begin = current_copy_begin_;
        job.trace.copy_end = seconds_since(start_);

        if (options_.mode == WriteMode::SingleBuffer) {
            write_chunk(job);
            std::lock_guard lock(mu_);
            free_slots_.push_back(job.slot);
            return;
        }
        {
            std::lock_guard lock(mu_);
            if (error_) {
                std::rethrow_exception(error_);
            }
            jobs_.push_back(job);
        }
        job_cv_.notify_one();
    }

    EngineStats finish(PendingQueue::Tail tail, std::uint64_t total) {
        close_pipeline();
        if (error_) {
            std::rethrow_exception(error_);
        }
        if (::fdatasync(fd_.get()) != 0) {
            throw IoError(0, "fdatasync failed: " + detail::errno_message(errno));
        }
        if (!tail.suffix.empty()) {
            write_suffix(tail);
        }
        fd_.close();
        stats_.bytes_written = total;
        stats_.wall_seconds = seconds_since(start_);
        stats_.throughput = stats_.wall_seconds > 0.0 ? static_cast<double>(total) / stats_.wall_seconds : 0.0;
        return std::move(stats_);
    }

private:
    struct Job {
        int slot = 0;
        FlushEvent event;
        std::span<const std::byte> data;
        ChunkTrace trace;
    };

    void open_destination(const std::filesystem::path& dest) {
        dest_ = dest;
        const int base_flags = O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC;
        if (options_.direct) {
            fd_ = detail::FileDescriptor(::open(dest.c_str(), base_flags | O_DIRECT, 0644));
            if (!fd_.valid() && errno == EINVAL) {
                stats_.fallback = true;
            } else if (!fd_.valid()) {
                throw IoError(0, "cannot open " + dest.string() + ": " + detail::errno_message(errno));
            }
        } else {
            stats_.fallback = true;
        }
        if (!fd_.valid()) {
            fd_ = detail::FileDescriptor(::open(dest.c_str(), base_flags, 0644));
            if (!fd_.valid()) {
                throw IoError(0, "cannot open " + dest.string() + ": " + detail::errno_message(errno));
            }
        }
    }

    void close_pipeline() {
        if (!writer_.joinable()) {
            return;
        }
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        job_cv_.notify_all();
        writer_.join();
    }

    void writer_loop() {
        for (;;) {
            Job job;
            {
                std::unique_lock lock(mu_);
                job_cv_.wait(lock, [this] { return closed_ || !jobs_.empty(); });
                if (jobs_.empty()) {
                    return;
                }
                job = jobs_.front();
                jobs_.pop_front();
            }
            bool failed = false;
            {
                std::lock_guard lock(mu_);
                failed = static_cast<bool>(error_);
            }
            if (!failed) {
                try {
                    write_chunk(job);
                } catch (...) {
                    std::lock_guard lock(mu_);
                    error_ = std::current_exception();
                }
            }
            {
                std::lock_guard lock(mu_);
                free_slots_.push_back(job.slot);
            }
            slot_cv_.notify_all();
        }
    }

    // Splits one flush into up to queue_depth alignment-multiple requests.
    void write_chunk(Job& job) {
        job.trace.write_begin = seconds_since(start_);
        const auto align = options_.alignment;
        const std::uint64_t len = job.event.length;
        const std::uint64_t depth = std::max<std::uint64_t>(1, options_.queue_depth);
        std::uint64_t piece = (len + depth - 1) / depth;
        piece = std::max<std::uint64_t>(align, (piece + align - 1) / align * align);
        const std::size_t count = static_cast<std::size_t>((len + piece - 1) / piece);

        pool_.run(count, [&](std::size_t i) {
            const std::uint64_t rel = i * piece;
            const std::uint64_t n = std::min(piece, len - rel);
            direct_write(job.data.subspan(static_cast<std::size_t>(rel), static_cast<std::size_t>(n)),
                         job.event.offset + rel);
        });

        job.trace.write_end = seconds_since(start_);
        std::lock_guard lock(stats_mu_);
        ++stats_.direct_write_count;
        stats_.direct_request_count += count;
        if (options_.trace) {
            stats_.trace.chunks.push_back(job.trace);
        }
    }

    void direct_write(std::span<const std::byte> data, std::uint64_t offset) {
        if (options_.trace) {
            std::lock_guard lock(stats_mu_);
            stats_.trace.requests.push_back({IoPath::Direct, offset, data.size()});
        }
        int err = detail::pwrite_all(fd_.get(), data, offset);
        if (err == EINVAL) {
            // The device rejected the alignment; continue through the page cache.
            drop_direct_flag();
            err = detail::pwrite_all(fd_.get(), data, offset);
        }
        if (err != 0) {
            throw IoError(offset, "write of " + std::to_string(data.size()) + " bytes at offset " +
                                      std::to_string(offset) + " failed: " + detail::errno_message(err));
        }
    }

    void drop_direct_flag() {
        std::lock_guard lock(stats_mu_);
        const int flags = ::fcntl(fd_.get(), F_GETFL);
        if (flags >= 0 && (flags & O_DIRECT) != 0) {
            ::fcntl(fd_.get(), F_SETFL, flags & ~O_DIRECT);
        }
        stats_.fallback = true;
    }

    void write_suffix(const PendingQueue::Tail& tail) {
        detail::FileDescriptor fd(::open(dest_.c_str(), O_WRONLY | O_CLOEXEC));
        if (!fd.valid()) {
            throw IoError(tail.suffix_offset, "cannot reopen " + dest_.string() + " for the unaligned tail: " +
                                                  detail::errno_message(errno));
        }
        if (options_.trace) {
            stats_.trace.requests.push_back({IoPath::Buffered, tail.suffix_offset, tail.suffix.size()});
        }
        const int err = detail::pwrite_all(fd.get(), tail.suffix, tail.suffix_offset);
        if (err != 0) {
            throw IoError(tail.suffix_offset, "tail write at offset " + std::to_string(tail.suffix_offset) +
                                                  " failed: " + detail::errno_message(err));
        }
        if (::fsync(fd.get()) != 0) {
            throw IoError(tail.suffix_offset, "fsync failed: " + detail::errno_message(errno));
        }
        fd.close();
        ++stats_.buffered_write_count;
    }

    WriteOptions options_;
    Clock::time_point start_;
    std::filesystem::path dest_;
    detail::FileDescriptor fd_;
    std::vector<StagingBuffer> buffers_;
    RequestPool pool_;

    std::mutex mu_;
    std::condition_variable slot_cv_;
    std::condition_variable job_cv_;
    std::deque<int> free_slots_;
    std::deque<Job> jobs_;
    bool closed_ = false;
    std::exception_ptr error_;

    int current_slot_ = 0;
    double current_copy_begin_ = 0.0;
    std::uint64_t chunk_index_ = 0;

    std::mutex stats_mu_;
    EngineStats stats_;

    std::jthread writer_;
};

class ScopedRemove {
public:
    explicit ScopedRemove(std::filesystem::path path) : path_(std::move(path)) {}
    ~ScopedRemove() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }

private:
    std::filesystem::path path_;
};

}  // namespace

std::string_view to_string(WriteMode mode) {
    return mode == WriteMode::SingleBuffer ? "single" : "double";
}

std::optional<WriteMode> parse_write_mode(std::string_view text) {
    if (text == "single") {
        return WriteMode::SingleBuffer;
    }
    if (text == "double") {
        return WriteMode::DoubleBuffer;
    }
    return std::nullopt;
}

// StagingBuffer ----------------------------------------------------------------

StagingBuffer::StagingBuffer(std::uint64_t capacity, std::uint64_t alignment, bool lock_memory)
    : capacity_(capacity), alignment_(alignment) {
    format::require_valid_alignment(alignment);
    if (capacity < alignment || capacity % alignment != 0) {
        config_error("staging buffer of " + std::to_string(capacity) + " bytes is not a positive multiple of " +
                     std::to_string(alignment));
    }
    void* p = nullptr;
    const auto base_alignment = std::max<std::uint64_t>(alignment, kPageBytes);
    if (::posix_memalign(&p, base_alignment, capacity) != 0) {
        throw Error(ErrorKind::Setup, "cannot allocate " + std::to_string(capacity) + " byte staging buffer");
    }
    data_ = static_cast<std::byte*>(p);
    std::memset(data_, 0, capacity);
    locked_ = lock_memory && ::mlock(data_, capacity) == 0;
}

StagingBuffer::StagingBuffer(StagingBuffer&& other) noexcept
    : data_(std::exchange(other.data_, nullptr)),
      capacity_(std::exchange(other.capacity_, 0)),
      alignment_(other.alignment_),
      locked_(std::exchange(other.locked_, false)) {}

StagingBuffer& StagingBuffer::operator=(StagingBuffer&& other) noexcept {
    if (this != &other) {
        release();
        data_ = std::exchange(other.data_, nullptr);
        capacity_ = std::exchange(other.capacity_, 0);
        alignment_ = other.alignment_;
        locked_ = std::exchange(other.locked_, false);
    }
    return *this;
}

StagingBuffer::~StagingBuffer() {
    release();
}

void StagingBuffer::release() noexcept {
    if (data_ != nullptr) {
        if (locked_) {
            ::munlock(data_, capacity_);
        }
        std::free(data_);
        data_ = nullptr;
    }
}

// PendingQueue -----------------------------------------------------------------

PendingQueue::PendingQueue(std::uint64_t threshold, std::uint64_t alignment, FlushSink& sink)
    : threshold_(threshold), alignment_(alignment), sink_(sink) {
    format::require_valid_alignment(alignment);
    if (threshold < alignment || threshold % alignment != 0) {
        config_error("flush threshold " + std::to_string(threshold) + " is not a positive multiple of alignment " +
                     std::to_string(alignment));
    }
}

std::vector<FlushEvent> PendingQueue::append(std::span<const std::byte> bytes) {
    std::vector<FlushEvent> events;
    while (!bytes.empty()) {
        if (current_.empty()) {
            current_ = sink_.acquire();
            if (current_.size() < threshold_) {
                config_error("sink buffer smaller than the flush threshold");
            }
        }
        const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(bytes.size(), threshold_ - queued_));
        std::memcpy(current_.data() + queued_, bytes.data(), n);
        queued_ += n;
        bytes = bytes.subspan(n);
        if (queued_ == threshold_) {
            const FlushEvent event{base_offset_, threshold_};
            auto full = current_.first(static_cast<std::size_t>(threshold_));
            current_ = {};
            base_offset_ += threshold_;
            queued_ = 0;
            sink_.flush(event, full);
            events.push_back(event);
        }
    }
    return events;
}

PendingQueue::Tail PendingQueue::finish() {
    Tail tail;
    const std::uint64_t aligned = queued_ & ~(alignment_ - 1);
    tail.suffix_offset = base_offset_ + aligned;
    if (queued_ > aligned) {
        auto rest = current_.subspan(static_cast<std::size_t>(aligned), static_cast<std::size_t>(queued_ - aligned));
        tail.suffix.assign(rest.begin(), rest.end());
    }
    if (aligned > 0) {
        const FlushEvent event{base_offset_, aligned};
        auto data = current_.first(static_cast<std::size_t>(aligned));
        sink_.flush(event, data);
        tail.aligned = event;
    }
    current_ = {};
    base_offset_ += queued_;
    queued_ = 0;
    return tail;
}

// Engine ---------------------------------------------------------------------------

void WriteOptions::validate() const {
    format::require_valid_alignment(alignment);
    if (buffer_bytes < alignment || buffer_bytes % alignment != 0) {
        config_error("IO buffer of " + std::to_string(buffer_bytes) + " bytes is not a positive multiple of " +
                     std::to_string(alignment));
    }
    if (queue_depth < 1 || queue_depth > 256) {
        config_error("queue depth must be in [1, 256]");
    }
}

EngineStats write_pieces(std::span<const std::span<const std::byte>> pieces, const std::filesystem::path& dest,
                         const WriteOptions& options) {
    options.validate();
    StagedWriter writer(dest, options);
    PendingQueue queue(options.buffer_bytes, options.alignment, writer);
    for (const auto& piece : pieces) {
        queue.append(piece);
    }
    const auto total = queue.appended();
    return writer.finish(queue.finish(), total);
}

EngineStats write_checkpoint(std::span<const std::byte> stream, const std::filesystem::path& dest,
                             const WriteOptions& options) {
    const std::span<const std::byte> pieces[] = {stream};
    return write_pieces(pieces, dest, options);
}

EngineStats write_checkpoint(const format::SerializedStream& stream, const std::filesystem::path& dest,
                             const WriteOptions& options) {
    const std::span<const std::byte> all = stream.bytes;
    std::vector<std::span<const std::byte>> pieces;
    pieces.reserve(stream.record_offsets.size() + 2);
    std::uint64_t pos = 0;
    for (const auto& rec : stream.record_offsets) {
        if (rec.offset > pos) {
            pieces.push_back(all.subspan(pos, rec.offset - pos));
        }
        pieces.push_back(all.subspan(rec.offset, rec.length));
        pos = rec.offset + rec.length;
    }
    if (pos < all.size()) {
        pieces.push_back(all.subspan(pos));
    }
    return write_pieces(pieces, dest, options);
}

SaveResult save_sharded(std::span<const std::byte> stream, const plan::PartitionPlan& plan,
                        const std::filesystem::path& dir, std::string_view stem, const WriteOptions& options) {
    options.validate();
    if (plan.total_bytes != stream.size()) {
        throw Error(ErrorKind::Plan, "plan covers " + std::to_string(plan.total_bytes) + " bytes but the stream has " +
                                         std::to_string(stream.size()));
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError(0, "cannot create " + dir.string() + ": " + ec.message());
    }

    const auto start = Clock::now();
    const auto k = plan.assignments.size();
    SaveResult result;
    result.writer_stats.resize(k);
    result.manifest.total_bytes = plan.total_bytes;
    result.manifest.alignment = options.alignment;
    result.manifest.shards.resize(k);
    std::vector<std::exception_ptr> errors(k);

    auto write_shard = [&](std::size_t i) {
        const auto& a = plan.assignments[i];
        try {
            const auto bytes = stream.subspan(a.offset, a.length);
            result.writer_stats[i] = write_checkpoint(bytes, dir / format::shard_file_name(stem, i, k), options);
            result.manifest.shards[i] = {a.rank, a.offset, a.length, crc32(bytes)};
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    {
        std::vector<std::jthread> writers;
        for (std::size_t i = 1; i < k; ++i) {
            writers.emplace_back(write_shard, i);
        }
        if (k > 0) {
            write_shard(0);
        }
    }
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
    result.manifest.validate();
    result.manifest_file = format::manifest_path(dir, stem);
    format::write_manifest(result.manifest_file, result.manifest);
    result.wall_seconds = seconds_since(start);
    return result;
}

// Benchmark --------------------------------------------------------------------

std::vector<BenchRow> bench_write(const BenchConfig& config) {
    std::vector<BenchRow> rows;
    if (config.repeats == 0) {
        return rows;
    }
    std::error_code ec;
    if (!std::filesystem::is_directory(config.scratch_dir, ec)) {
        throw Error(ErrorKind::Setup, "scratch directory " + config.scratch_dir.string() + " does not exist");
    }
    if (config.sizes.empty() || config.buffer_sizes.empty() || config.modes.empty()) {
        return rows;
    }
    const auto largest = *std::max_element(config.sizes.begin(), config.sizes.end());
    struct statvfs vfs {};
    if (::statvfs(config.scratch_dir.c_str(), &vfs) == 0) {
        const auto free_bytes = static_cast<std::uint64_t>(vfs.f_bavail) * vfs.f_frsize;
        if (free_bytes < largest + (64ull << 20)) {
            throw Error(ErrorKind::Setup, "scratch directory has " + std::to_string(free_bytes) +
                                              " free bytes, need " + std::to_string(largest));
        }
    }
    for (auto b : config.buffer_sizes) {
        WriteOptions probe;
        probe.buffer_bytes = b;
        probe.alignment = config.alignment;
        probe.queue_depth = config.queue_depth;
        probe.validate();
    }

    std::vector<std::byte> data(static_cast<std::size_t>(largest));
    std::mt19937_64 rng(config.seed);
    for (std::size_t i = 0; i + 8 <= data.size(); i += 8) {
        const auto v = rng();
        std::memcpy(data.data() + i, &v, 8);
    }

    const auto path = config.scratch_dir / ("fastckpt-bench-" + std::to_string(::getpid()) + ".bin");
    for (auto size : config.sizes) {
        const auto stream = std::span<const std::byte>(data).first(static_cast<std::size_t>(size));
        for (auto buffer : config.buffer_sizes) {
            for (auto mode : config.modes) {
                for (std::uint32_t rep = 0; rep < config.repeats; ++rep) {
                    WriteOptions opts;
                    opts.mode = mode;
                    opts.buffer_bytes = buffer;
                    opts.alignment = config.alignment;
                    opts.queue_depth = config.queue_depth;
                    opts.direct = config.direct;
                    ScopedRemove cleanup(path);
                    rows.push_back({size, buffer, mode, rep, write_checkpoint(stream, path, opts)});
                }
            }
        }
    }
    return rows;
}

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
    out << kBenchCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.size_bytes << ',' << r.buffer_bytes << ',' << to_string(r.mode) << ',' << r.repeat << ','
            << std::setprecision(9) << std::fixed << r.stats.wall_seconds << ',' << std::setprecision(1)
            << r.stats.throughput << ',' << r.stats.direct_write_count << ',' << r.stats.buffered_write_count << ','
            << (r.stats.fallback ? 1 : 0) << '\n';
        out << std::defaultfloat;
    }
}

}  // namespace fastckpt::io
