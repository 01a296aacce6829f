// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "posix_file.hpp"

#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "fastckpt/error.hpp"

namespace fastckpt::detail {

FileDescriptor& FileDescriptor::operator=(FileDescriptor&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) {
            ::close(fd_);
        }
        fd_ = other.release();
    }
    return *this;
}

FileDescriptor::~FileDescriptor() {
    if (fd_ >= 0) {
        ::close(fd_);
    }
}

int FileDescriptor::release() noexcept {
    const int fd = fd_;
    fd_ = -1;
    return fd;
}

void FileDescriptor::close() {
    if (fd_ < 0) {
        return;
    }
    const int fd = release();
    if (::close(fd) != 0) {
        throw IoError(0, "close failed: " + errno_message(errno));
    }
}

std::string errno_message(int err) {
    return std::string(std::strerror(err)) + " (errno " + std::to_string(err) + ")";
}

int pwrite_all(int fd, std::span<const std::byte> data, std::uint64_t offset) {
    while (!data.empty()) {
        const ssize_t n = ::pwrite(fd, data.data(), data.size(), static_cast<off_t>(offset));
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return errno;
        }
        if (n == 0) {
            return EIO;
        }
        data = data.subspan(static_cast<std::size_t>(n));
        offset += static_cast<std::uint64_t>(n);
    }
    return 0;
}

std::int64_t pread_all(int fd, std::span<std::byte> data, std::uint64_t offset) {
    std::int64_t total = 0;
    while (!data.empty()) {
        const ssize_t n = ::pread(fd, data.data(), data.size(), static_cast<off_t>(offset));
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return -errno;
        }
        if (n == 0) {
            break;
        }
        data = data.subspan(static_cast<std::size_t>(n));
        offset += static_cast<std::uint64_t>(n);
        total += n;
    }
    return total;
}

}  // namespace fastckpt::detail
