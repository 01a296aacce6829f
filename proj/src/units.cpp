// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/units.hpp"

#include <charconv>
#include <cmath>
#include <string>

#include "fastckpt/error.hpp"

namespace fastckpt {

namespace {

[[noreturn]] void bad(std::string_view what, std::string_view text) {
    throw Error(ErrorKind::Config, std::string(what) + ": '" + std::string(text) + "'");
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
}

}  // namespace

std::uint64_t parse_size(std::string_view text) {
    text = trim(text);
    std::uint64_t value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end == text.data()) {
        bad("invalid size", text);
    }
    const std::string_view suffix(end, static_cast<std::size_t>(text.data() + text.size() - end));
    unsigned shift = 0;
    if (suffix.empty() || suffix == "B") {
        shift = 0;
    } else if (suffix == "KiB") {
        shift = 10;
    } else if (suffix == "MiB") {
        shift = 20;
    } else if (suffix == "GiB") {
        shift = 30;
    } else if (suffix == "TiB") {
        shift = 40;
    } else {
        bad("unknown size suffix (use B, KiB, MiB, GiB, TiB)", text);
    }
    if (shift > 0 && value > (UINT64_MAX >> shift)) {
        bad("size overflows", text);
    }
    return value << shift;
}

std::vector<std::uint64_t> parse_size_list(std::string_view text) {
    std::vector<std::uint64_t> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        const auto item = trim(text.substr(0, comma));
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        if (item.empty()) {
            continue;
        }
        const auto dots = item.find("..");
        if (dots == std::string_view::npos) {
            out.push_back(parse_size(item));
            continue;
        }
        const auto lo = parse_size(item.substr(0, dots));
        const auto hi = parse_size(item.substr(dots + 2));
        if (lo == 0 || lo > hi) {
            bad("range must satisfy 0 < low <= high", item);
        }
        for (std::uint64_t v = lo; v <= hi; v *= 2) {
            out.push_back(v);
            if (v > hi / 2) {
                break;
            }
        }
    }
    return out;
}

std::uint64_t parse_count(std::string_view text) {
    text = trim(text);
    std::uint64_t value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec == std::errc{} && end == text.data() + text.size()) {
        return value;
    }
    double real = 0.0;
    auto [fend, fec] = std::from_chars(text.data(), text.data() + text.size(), real);
    if (fec != std::errc{} || fend != text.data() + text.size() || !(real >= 0.0) || real >= 0x1p64 ||
        std::floor(real) != real) {
        bad("expected a non-negative integral count", text);
    }
    return static_cast<std::uint64_t>(real);
}

}  // namespace fastckpt
