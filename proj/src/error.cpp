// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/error.hpp"

namespace fastckpt {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Sizing: return "sizing";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Format: return "format";
        case ErrorKind::Config: return "config";
        case ErrorKind::Corruption: return "corruption";
        case ErrorKind::Manifest: return "manifest";
        case ErrorKind::Load: return "load";
        case ErrorKind::Io: return "io";
        case ErrorKind::Plan: return "plan";
        case ErrorKind::Setup: return "setup";
    }
    return "unknown";
}

}  // namespace fastckpt
