// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/partition_planner.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <utility>

#include <json.hpp>

#include "fastckpt/error.hpp"

namespace fastckpt::plan {

namespace {

[[noreturn]] void plan_error(const std::string& what) {
    throw Error(ErrorKind::Plan, what);
}

// DP ranks grouped by the (node, socket) that hosts them, groups in
// topology order and ranks ascending inside each group.
std::vector<std::vector<RankId>> group_by_socket(const std::vector<RankId>& dp_ranks, const Topology& topo) {
    topo.validate();
    if (dp_ranks.empty()) {
        plan_error("no data-parallel ranks given");
    }
    std::vector<RankId> sorted = dp_ranks;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        plan_error("duplicate data-parallel rank ids");
    }
    if (sorted.back() >= topo.rank_count()) {
        plan_error("rank " + std::to_string(sorted.back()) + " is outside a topology of " +
                   std::to_string(topo.rank_count()) + " ranks");
    }
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<RankId>> groups;
    for (auto r : sorted) {
        groups[{topo.node_of(r), topo.socket_of(r)}].push_back(r);
    }
    std::vector<std::vector<RankId>> out;
    out.reserve(groups.size());
    for (auto& [key, ranks] : groups) {
        out.push_back(std::move(ranks));
    }
    return out;
}

}  // namespace

std::uint32_t Topology::socket_of(RankId rank) const {
    const auto local = static_cast<std::uint64_t>(rank % ranks_per_node);
    return static_cast<std::uint32_t>(local * sockets_per_node / ranks_per_node);
}

void Topology::validate() const {
    if (node_count < 1 || sockets_per_node < 1) {
        throw Error(ErrorKind::Config, "topology needs at least one node and one socket per node");
    }
    if (ranks_per_node < sockets_per_node) {
        throw Error(ErrorKind::Config, "ranks_per_node must be >= sockets_per_node");
    }
    if (static_cast<std::uint64_t>(node_count) * ranks_per_node > UINT32_MAX) {
        throw Error(ErrorKind::Config, "topology has too many ranks");
    }
}

WriterStrategy WriterStrategy::parse(std::string_view text) {
    if (text == "replica") {
        return replica();
    }
    if (text == "socket") {
        return socket();
    }
    constexpr std::string_view kFixed = "fixed:";
    if (text.starts_with(kFixed)) {
        auto digits = text.substr(kFixed.size());
        std::uint32_t k = 0;
        auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
        if (ec == std::errc{} && end == digits.data() + digits.size() && k >= 1) {
            return fixed(k);
        }
    }
    throw Error(ErrorKind::Config, "writer strategy must be replica, socket or fixed:<k>=1..., got '" +
                                       std::string(text) + "'");
}

std::string WriterStrategy::to_string() const {
    switch (kind) {
        case Kind::Replica: return "replica";
        case Kind::Socket: return "socket";
        case Kind::Fixed: return "fixed:" + std::to_string(fixed_count);
    }
    return "unknown";
}

std::string PartitionPlan::to_json() const {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& a : assignments) {
        rows.push_back({{"writer_id", a.rank}, {"offset", a.offset}, {"length", a.length}});
    }
    return rows.dump(2) + "\n";
}

std::vector<RankId> all_ranks(const Topology& topo) {
    topo.validate();
    std::vector<RankId> ranks(topo.rank_count());
    for (RankId r = 0; r < ranks.size(); ++r) {
        ranks[r] = r;
    }
    return ranks;
}

std::vector<RankId> select_writers(const std::vector<RankId>& dp_ranks, const WriterStrategy& strategy,
                                   const Topology& topo) {
    const auto groups = group_by_socket(dp_ranks, topo);
    std::vector<RankId> writers;
    switch (strategy.kind) {
        case WriterStrategy::Kind::Replica:
            for (const auto& g : groups) {
                writers.insert(writers.end(), g.begin(), g.end());
            }
            std::sort(writers.begin(), writers.end());
            break;
        case WriterStrategy::Kind::Socket:
            for (const auto& g : groups) {
                writers.push_back(g.front());
            }
            break;
        case WriterStrategy::Kind::Fixed: {
            const auto k = strategy.fixed_count;
            if (k < 1) {
                plan_error("fixed writer count must be >= 1");
            }
            if (k > dp_ranks.size()) {
                plan_error("fixed:" + std::to_string(k) + " exceeds the " + std::to_string(dp_ranks.size()) +
                           " data-parallel ranks");
            }
            // Round r takes the r-th lowest rank of every socket, so the first
            // round is exactly the Socket selection.
            for (std::size_t round = 0; writers.size() < k; ++round) {
                for (const auto& g : groups) {
                    if (round < g.size() && writers.size() < k) {
                        writers.push_back(g[round]);
                    }
                }
            }
            break;
        }
    }
    return writers;
}

std::vector<std::uint64_t> balance(std::uint64_t total, std::uint32_t k) {
    if (k < 1) {
        plan_error("cannot balance over zero writers");
    }
    const std::uint64_t base = total / k;
    const std::uint64_t extra = total % k;
    std::vector<std::uint64_t> lengths(k, base);
    for (std::uint64_t i = 0; i < extra; ++i) {
        ++lengths[i];
    }
    return lengths;
}

PartitionPlan make_plan(std::uint64_t total, const std::vector<RankId>& dp_ranks, const WriterStrategy& strategy,
                        const Topology& topo) {
    const auto writers = select_writers(dp_ranks, strategy, topo);
    const auto lengths = balance(total, static_cast<std::uint32_t>(writers.size()));
    PartitionPlan plan{total, {}};
    plan.assignments.reserve(writers.size());
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < writers.size(); ++i) {
        plan.assignments.push_back({writers[i], offset, lengths[i]});
        offset += lengths[i];
    }
    return plan;
}

}  // namespace fastckpt::plan
