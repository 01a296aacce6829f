// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fastckpt/ckpt_format.hpp"
#include "fastckpt/crc32.hpp"
#include "fastckpt/error.hpp"
#include "fastckpt/partition_planner.hpp"
#include "fastckpt/write_engine.hpp"
#include "test_support.hpp"

using namespace fastckpt;
using namespace fastckpt::format;
using fastckpt::testing::ScratchDir;

namespace {

std::vector<std::byte> bytes_of(std::string_view s) {
    std::vector<std::byte> out(s.size());
    std::memcpy(out.data(), s.data(), s.size());
    return out;
}

template <typename T>
void put_le(std::vector<std::byte>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::byte>(static_cast<std::uint64_t>(v) >> (8 * i)));
    }
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::Setup;
}

TensorRecord f32_w() {
    TensorRecord r;
    r.name = "w";
    r.dtype = DType::F32;
    r.shape = {2};
    r.payload = bytes_of(std::string("\x00\x00\x80\x3f\x00\x00\x00\x40", 8));  // 1.0f, 2.0f
    return r;
}

std::vector<std::vector<std::byte>> split_by(const std::vector<std::byte>& stream, const ShardManifest& m) {
    std::vector<std::vector<std::byte>> shards;
    for (const auto& s : m.shards) {
        shards.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(s.offset),
                            stream.begin() + static_cast<std::ptrdiff_t>(s.offset + s.length));
    }
    return shards;
}

ShardManifest manifest_for(const std::vector<std::byte>& stream, const std::vector<std::uint64_t>& lengths) {
    ShardManifest m;
    m.total_bytes = stream.size();
    std::uint64_t off = 0;
    std::uint32_t id = 0;
    for (auto len : lengths) {
        std::vector<std::byte> piece(stream.begin() + static_cast<std::ptrdiff_t>(off),
                                     stream.begin() + static_cast<std::ptrdiff_t>(off + len));
        m.shards.push_back({id++, off, len, fastckpt::testing::reference_crc32(piece)});
        off += len;
    }
    return m;
}

}  // namespace

TEST_CASE("crc32 agrees with the bitwise reference") {
    CHECK(crc32(bytes_of("123456789")) == 0xCBF43926u);
    CHECK(crc32({}) == 0u);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 64; ++i) {
        const auto data = fastckpt::testing::random_bytes(rng, rng() % 5000);
        CHECK(crc32(data) == fastckpt::testing::reference_crc32(data));
        // incremental update over an arbitrary cut
        const std::size_t cut = data.empty() ? 0 : rng() % data.size();
        const auto head = std::span(data).first(cut);
        const auto tail = std::span(data).subspan(cut);
        CHECK(crc32(tail, crc32(head)) == crc32(data));
    }
}

TEST_CASE("single f32 tensor serializes to the hand-assembled 49 bytes") {
    std::vector<std::byte> expected;
    for (char c : std::string("FPCK")) expected.push_back(static_cast<std::byte>(c));
    put_le<std::uint32_t>(expected, 1);   // version
    put_le<std::uint64_t>(expected, 1);   // record count
    put_le<std::uint16_t>(expected, 1);   // name_len
    expected.push_back(std::byte{'w'});
    put_le<std::uint8_t>(expected, 1);    // f32
    put_le<std::uint8_t>(expected, 1);    // ndim
    put_le<std::uint64_t>(expected, 2);   // dim 0
    put_le<std::uint64_t>(expected, 8);   // payload_len
    const auto payload = f32_w().payload;
    expected.insert(expected.end(), payload.begin(), payload.end());
    put_le<std::uint32_t>(expected, fastckpt::testing::reference_crc32(expected));
    REQUIRE(expected.size() == 49);

    const auto stream = serialize(std::vector{f32_w()});
    CHECK(stream.bytes == expected);
    REQUIRE(stream.record_offsets.size() == 1);
    CHECK(stream.record_offsets[0] == RecordSpan{16, 29});
    CHECK(serialized_size(std::vector{f32_w()}) == 49);
    CHECK(deserialize(stream.bytes) == std::vector{f32_w()});
}

TEST_CASE("empty record list") {
    const auto stream = serialize({});
    CHECK(stream.bytes.size() == kHeaderBytes + kFooterBytes);
    CHECK(stream.record_offsets.empty());
    CHECK(deserialize(stream.bytes).empty());
}

TEST_CASE("record order and offsets") {
    auto a = f32_w();
    TensorRecord b{"b", DType::I64, {1, 1}, std::vector<std::byte>(8, std::byte{7})};
    const auto stream = serialize(std::vector{a, b});
    REQUIRE(stream.record_offsets.size() == 2);
    CHECK(stream.record_offsets[0].offset < stream.record_offsets[1].offset);
    CHECK(stream.record_offsets[0].offset + stream.record_offsets[0].length == stream.record_offsets[1].offset);
    CHECK(stream.record_offsets[1].offset + stream.record_offsets[1].length + kFooterBytes == stream.bytes.size());
    const auto back = deserialize(stream.bytes);
    CHECK(back[0].name == "w");
    CHECK(back[1].name == "b");
}

TEST_CASE("invalid records are rejected") {
    auto r = f32_w();
    r.payload.pop_back();
    CHECK(kind_of([&] { serialize(std::vector{r}); }) == ErrorKind::Format);
    r = f32_w();
    r.name.clear();
    CHECK(kind_of([&] { serialize(std::vector{r}); }) == ErrorKind::Format);
    r = f32_w();
    r.name.assign(kMaxNameBytes + 1, 'x');
    CHECK(kind_of([&] { serialize(std::vector{r}); }) == ErrorKind::Format);
    r = f32_w();
    r.dtype = static_cast<DType>(9);
    CHECK(kind_of([&] { serialize(std::vector{r}); }) == ErrorKind::Format);
}

TEST_CASE("damaged streams are format errors") {
    auto good = serialize(std::vector{f32_w(), f32_w()}).bytes;
    for (std::size_t i = 0; i < good.size(); ++i) {
        auto bad = good;
        bad[i] ^= std::byte{0x01};
        CHECK(kind_of([&] { deserialize(bad); }) == ErrorKind::Format);
    }
    for (std::size_t n = 0; n < good.size(); ++n) {
        CHECK(kind_of([&] { deserialize(std::span(good).first(n)); }) == ErrorKind::Format);
    }
    // Internally consistent crc but a lying record count.
    auto lying = good;
    lying.resize(lying.size() - 4);
    lying[8] = std::byte{3};
    put_le<std::uint32_t>(lying, fastckpt::testing::reference_crc32(lying));
    CHECK(kind_of([&] { deserialize(lying); }) == ErrorKind::Format);
}

TEST_CASE("property: round trip and determinism") {
    std::mt19937_64 rng(20260101);
    for (int i = 0; i < 300; ++i) {
        const auto records = fastckpt::testing::random_records(rng);
        const auto a = serialize(records);
        const auto b = serialize(records);
        CHECK(a.bytes == b.bytes);
        CHECK(a.bytes.size() == serialized_size(records));
        CHECK(deserialize(a.bytes) == records);
        CHECK(serialize(deserialize(a.bytes)).bytes == a.bytes);
    }
}

TEST_CASE("property: distinct record lists give distinct streams") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 200; ++i) {
        auto records = fastckpt::testing::random_records(rng, 4, 64);
        if (records.empty()) continue;
        auto changed = records;
        auto& victim = changed[rng() % changed.size()];
        if (!victim.payload.empty() && rng() % 2 == 0) {
            victim.payload[rng() % victim.payload.size()] ^= std::byte{0x80};
        } else {
            victim.name += "x";
        }
        CHECK(serialize(records).bytes != serialize(changed).bytes);
    }
}

TEST_CASE("aligned split") {
    CHECK(split_aligned(1030, 512).prefix_len == 1024);
    CHECK(split_aligned(1030, 512).suffix_len == 6);
    CHECK(split_aligned(1024, 512).prefix_len == 1024);
    CHECK(split_aligned(1024, 512).suffix_len == 0);
    CHECK(split_aligned(17ull << 30, 512).suffix_len < 512);
    CHECK(split_aligned(0, 4096).prefix_len == 0);

    for (std::uint64_t bad : {0ull, 1ull, 256ull, 513ull, 768ull, 1000ull}) {
        CHECK(kind_of([&] { split_aligned(10, bad); }) == ErrorKind::Config);
    }

    std::mt19937_64 rng(5);
    for (int i = 0; i < 20000; ++i) {
        const std::uint64_t total = rng() & ((1ull << 40) - 1);
        const std::uint64_t align = 512ull << (rng() % 13);
        const auto s = split_aligned(total, align);
        CHECK(s.prefix_len + s.suffix_len == total);
        CHECK(s.suffix_len < align);
        CHECK(s.prefix_len % align == 0);
        CHECK(s.prefix_len == total / align * align);
    }
}

TEST_CASE("assemble") {
    const auto stream = bytes_of("0123456789");
    const auto m = manifest_for(stream, {4, 3, 3});
    CHECK(assemble(split_by(stream, m), m).bytes == stream);

    const auto one = manifest_for(stream, {10});
    CHECK(assemble(split_by(stream, one), one).bytes == stream);

    auto shards = split_by(stream, m);
    shards[1][0] ^= std::byte{0x01};
    try {
        assemble(shards, m);
        FAIL("corruption not detected");
    } catch (const CorruptionError& e) {
        CHECK(e.writer_id() == 1);
        CHECK(std::string(e.what()).find('1') != std::string::npos);
    }
}

TEST_CASE("manifest gaps and overlaps") {
    const auto stream = bytes_of("0123456789");
    auto gap = manifest_for(stream, {4, 3, 3});
    gap.shards[2].offset = 8;
    gap.shards[2].length = 2;
    CHECK(kind_of([&] { gap.validate(); }) == ErrorKind::Manifest);

    auto overlap = manifest_for(stream, {4, 3, 3});
    overlap.shards[1].offset = 3;
    CHECK(kind_of([&] { overlap.validate(); }) == ErrorKind::Manifest);

    auto short_total = manifest_for(stream, {4, 3, 3});
    short_total.total_bytes = 11;
    CHECK(kind_of([&] { short_total.validate(); }) == ErrorKind::Manifest);

    auto m = manifest_for(stream, {4, 3, 3});
    CHECK(kind_of([&] { assemble(std::vector<std::vector<std::byte>>(2), m); }) == ErrorKind::Manifest);
}

TEST_CASE("manifest json") {
    const auto m = manifest_for(bytes_of("0123456789"), {4, 3, 3});
    const auto text = m.to_json();
    CHECK(text.find("\"total_bytes\"") != std::string::npos);
    CHECK(text.find("\"writer_id\"") != std::string::npos);
    CHECK(text.find("\"crc32\"") != std::string::npos);
    CHECK(ShardManifest::from_json(text) == m);
    CHECK(kind_of([] { ShardManifest::from_json("{\"version\":1}"); }) == ErrorKind::Manifest);
    CHECK(kind_of([] { ShardManifest::from_json("not json"); }) == ErrorKind::Manifest);
}

TEST_CASE("file naming") {
    CHECK(shard_file_name("ckpt", 2, 4) == "ckpt.shard-2-of-4");
    CHECK(manifest_path("/x/y", "ckpt") == std::filesystem::path("/x/y/ckpt.manifest.json"));
    CHECK(stem_from_manifest_path("/x/y/model.manifest.json") == "model");
}

TEST_CASE("property: assemble inverts every plan") {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 300; ++i) {
        const auto stream = fastckpt::testing::random_bytes(rng, rng() % 3000);
        plan::Topology topo{1 + static_cast<std::uint32_t>(rng() % 4), 1 + static_cast<std::uint32_t>(rng() % 2), 0,
                            0.0};
        topo.ranks_per_node = topo.sockets_per_node * (1 + static_cast<std::uint32_t>(rng() % 4));
        const auto ranks = plan::all_ranks(topo);
        const std::uint32_t kind = rng() % 3;
        const auto strategy = kind == 0   ? plan::WriterStrategy::replica()
                              : kind == 1 ? plan::WriterStrategy::socket()
                                          : plan::WriterStrategy::fixed(1 + rng() % ranks.size());
        const auto layout = plan::make_plan(stream.size(), ranks, strategy, topo);
        std::vector<std::uint64_t> lengths;
        for (const auto& a : layout.assignments) lengths.push_back(a.length);
        const auto m = manifest_for(stream, lengths);
        CHECK(assemble(split_by(stream, m), m).bytes == stream);
    }
}

TEST_CASE("parallel load") {
    ScratchDir dir;
    std::mt19937_64 rng(8);
    std::vector<TensorRecord> records;
    while (records.size() < 5) {
        records = fastckpt::testing::random_records(rng, 12, 200000);
    }
    const auto stream = serialize(records);
    const plan::Topology topo{1, 1, 4, 0.0};
    const auto layout = plan::make_plan(stream.bytes.size(), plan::all_ranks(topo), plan::WriterStrategy::replica(), topo);
    io::WriteOptions opts;
    opts.buffer_bytes = 64 << 10;
    const auto saved = io::save_sharded(stream.bytes, layout, dir.path(), "ckpt", opts);
    REQUIRE(saved.manifest.shards.size() == 4);

    CHECK(load_parallel(saved.manifest_file, 4) == records);
    CHECK(load_parallel(saved.manifest_file, 1) == records);
    CHECK(load_parallel(saved.manifest_file, 16) == records);
    CHECK(load_stream_parallel(saved.manifest_file, 3).bytes == stream.bytes);

    SUBCASE("missing shard names it") {
        std::filesystem::remove(dir / shard_file_name("ckpt", 2, 4));
        try {
            load_parallel(saved.manifest_file, 4);
            FAIL("missing shard not reported");
        } catch (const LoadError& e) {
            CHECK(e.shard_index() == 2);
            CHECK(std::string(e.what()).find("shard 2") != std::string::npos);
        }
    }
    SUBCASE("flipped byte is a corruption error for that writer") {
        fastckpt::testing::flip_byte(dir / shard_file_name("ckpt", 3, 4), 10);
        try {
            load_parallel(saved.manifest_file, 2);
            FAIL("corruption not detected");
        } catch (const CorruptionError& e) {
            CHECK(e.writer_id() == saved.manifest.shards[3].writer_id);
        }
    }
    SUBCASE("truncated shard") {
        std::filesystem::resize_file(dir / shard_file_name("ckpt", 1, 4), saved.manifest.shards[1].length - 1);
        CHECK_THROWS_AS(load_parallel(saved.manifest_file, 4), Error);
    }
    SUBCASE("missing manifest") {
        CHECK(kind_of([&] { load_parallel(dir / "nope.manifest.json", 4); }) == ErrorKind::Load);
    }
}
