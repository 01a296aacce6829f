// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace fastckpt::detail {

/// Owning POSIX file descriptor.
class FileDescriptor {
public:
    FileDescriptor() = default;
    explicit FileDescriptor(int fd) : fd_(fd) {}
    FileDescriptor(const FileDescriptor&) = delete;
    FileDescriptor& operator=(const FileDescriptor&) = delete;
    FileDescriptor(FileDescriptor&& other) noexcept : fd_(other.release()) {}
    FileDescriptor& operator=(FileDescriptor&& other) noexcept;
    ~FileDescriptor();

    int get() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    int release() noexcept;
    /// Closes the descriptor, throwing IoError if close() reports a failure.
    void close();

private:
    int fd_ = -1;
};

std::string errno_message(int err);

/// Writes all of `data` at `offset`, retrying short writes and EINTR.
/// Returns 0 on success or the errno of the failing call.
int pwrite_all(int fd, std::span<const std::byte> data, std::uint64_t offset);

/// Reads exactly data.size() bytes at `offset`. Returns the number of bytes
/// read before EOF, or -errno on failure.
std::int64_t pread_all(int fd, std::span<std::byte> data, std::uint64_t offset);

}  // namespace fastckpt::detail
