// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-range partitioning of a serialized checkpoint across data-parallel
// writers. Every rank computes the same plan locally from the same inputs,
// so no coordination is needed at checkpoint time.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fastckpt::plan {

using RankId = std::uint32_t;

struct Topology {
    std::uint32_t node_count = 1;
    std::uint32_t sockets_per_node = 2;
    std::uint32_t ranks_per_node = 16;
    double ssd_write_bw_per_node = 24.8e9;  // bytes/second, informational

    std::uint32_t rank_count() const { return node_count * ranks_per_node; }
    std::uint32_t node_of(RankId rank) const { return rank / ranks_per_node; }
    std::uint32_t socket_of(RankId rank) const;
    void validate() const;

    bool operator==(const Topology&) const = default;
};

struct WriterStrategy {
    enum class Kind { Replica, Socket, Fixed };

    Kind kind = Kind::Socket;
    std::uint32_t fixed_count = 0;  // Fixed only

    static WriterStrategy replica() { return {Kind::Replica, 0}; }
    static WriterStrategy socket() { return {Kind::Socket, 0}; }
    static WriterStrategy fixed(std::uint32_t k) { return {Kind::Fixed, k}; }

    /// Accepts "replica", "socket" or "fixed:<k>"; throws Error(Config).
    static WriterStrategy parse(std::string_view text);
    std::string to_string() const;

    bool operator==(const WriterStrategy&) const = default;
};

struct Assignment {
    RankId rank = 0;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;

    bool operator==(const Assignment&) const = default;
};

struct PartitionPlan {
    std::uint64_t total_bytes = 0;
    std::vector<Assignment> assignments;

    /// `[{"writer_id":..,"offset":..,"length":..}, ...]`
    std::string to_json() const;

    bool operator==(const PartitionPlan&) const = default;
};

/// All ranks [0, topo.rank_count()).
std::vector<RankId> all_ranks(const Topology& topo);

std::vector<RankId> select_writers(const std::vector<RankId>& dp_ranks, const WriterStrategy& strategy,
                                   const Topology& topo);

/// k lengths; the first total % k get one extra byte.
std::vector<std::uint64_t> balance(std::uint64_t total, std::uint32_t k);

PartitionPlan make_plan(std::uint64_t total, const std::vector<RankId>& dp_ranks, const WriterStrategy& strategy,
                        const Topology& topo);

}  // namespace fastckpt::plan
