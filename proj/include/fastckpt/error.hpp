// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fastckpt {

enum class ErrorKind {
    Sizing,
    Domain,
    Format,
    Config,
    Corruption,
    Manifest,
    Load,
    Io,
    Plan,
    Setup,
};

const char* to_string(ErrorKind kind);

/// Base exception for everything thrown by the library. The kind is what
/// callers (the CLI in particular) dispatch on to pick an exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Shard bytes do not match the checksum recorded in the manifest.
class CorruptionError : public Error {
public:
    CorruptionError(std::uint32_t writer_id, const std::string& what)
        : Error(ErrorKind::Corruption, what), writer_id_(writer_id) {}

    std::uint32_t writer_id() const noexcept { return writer_id_; }

private:
    std::uint32_t writer_id_;
};

class IoError : public Error {
public:
    IoError(std::uint64_t offset, const std::string& what)
        : Error(ErrorKind::Io, what), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class LoadError : public Error {
public:
    LoadError(std::size_t shard_index, const std::string& what)
        : Error(ErrorKind::Load, what), shard_index_(shard_index) {}

    std::size_t shard_index() const noexcept { return shard_index_; }

private:
    std::size_t shard_index_;
};

}  // namespace fastckpt
