// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cli_app.hpp"
#include "fastckpt/ckpt_format.hpp"
#include "fastckpt/write_engine.hpp"
#include "test_support.hpp"

using namespace fastckpt;
using fastckpt::testing::ScratchDir;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "fastckpt");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    Run r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("estimate") {
    auto r = invoke({"estimate", "bandwidth", "--params", "1.3e9", "--tfb", "0.309"});
    REQUIRE(r.code == 0);
    const auto bw = std::stod(r.out.substr(r.out.rfind(',') + 1));
    CHECK(bw == doctest::Approx(59e9).epsilon(0.02));

    r = invoke({"estimate", "recovery", "--n", "1", "--m", "1000", "--t", "10"});
    CHECK(r.code == 0);
    CHECK(r.out.find(",5000\n") != std::string::npos);

    r = invoke({"estimate", "size", "--params", "1.3e9"});
    CHECK(r.out.find("18200000000,") != std::string::npos);

    CHECK(invoke({"estimate", "size", "--params", "1", "--bytes", "1"}).code == 2);
    CHECK(invoke({"estimate", "bandwidth", "--bytes", "1", "--tfb", "0"}).code == 2);
    CHECK(invoke({"estimate", "recovery", "--n", "0", "--m", "1", "--t", "1"}).code == 2);
    CHECK(invoke({"estimate", "size", "--params", "1e30"}).code == 2);
}

TEST_CASE("plan") {
    const auto r = invoke({"plan", "--bytes", "10", "--writers", "fixed:3"});
    REQUIRE(r.code == 0);
    for (const char* s : {"\"offset\": 0", "\"length\": 4", "\"offset\": 4", "\"offset\": 7", "\"length\": 3"}) {
        CHECK(r.out.find(s) != std::string::npos);
    }
    CHECK(invoke({"plan", "--bytes", "10", "--writers", "fixed:99"}).code == 2);
    CHECK(invoke({"plan", "--bytes", "10", "--writers", "bogus"}).code == 2);
    CHECK(invoke({"plan"}).code == 2);
    CHECK(invoke({"plan", "--bytes", "10"}).out == invoke({"plan", "--bytes", "10"}).out);
}

TEST_CASE("usage errors") {
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"--help"}).code == 0);
    CHECK(invoke({"simulate", "--mode", "sometimes"}).code == 2);
    CHECK(invoke({"simulate", "--bytes", "1GiB"}).code == 2);  // no bandwidth
    CHECK(invoke({"simulate", "--gas-sweep", "1..8", "--events", "--bytes", "1", "--bandwidth", "1"}).code == 2);
}

TEST_CASE("simulate") {
    auto r = invoke({"simulate", "--tf", "0.5", "--tb", "0.5", "--to", "0.1", "--bytes", "500", "--bandwidth", "1000",
                  "--mode", "sequential"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("sequential,1,10,1.6") != std::string::npos);

    r = invoke({"simulate", "--gas-sweep", "1..512", "--tf", "0.1", "--tb", "0.1", "--bytes", "1GiB", "--bandwidth",
             "1e9"});
    REQUIRE(r.code == 0);
    CHECK(lines(r.out) == 21);

    r = invoke({"simulate", "--events", "--iterations", "3", "--tf", "0.1", "--bytes", "1", "--bandwidth", "1"});
    CHECK(r.out.rfind("iter,phase,start_s,end_s\n", 0) == 0);
    CHECK(r.out.find("STALL") != std::string::npos);
}

TEST_CASE("save, load, verify, tamper") {
    ScratchDir dir;
    const std::string scratch = dir.path().string();
    auto r = invoke({"--scratch", scratch, "save", "--synthetic", "3MiB", "--tensors", "7", "--writers", "socket",
                  "--nodes", "1", "--sockets", "2", "--buffer", "1MiB"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(lines(r.out) == 3);  // header + 2 socket writers

    r = invoke({"--scratch", scratch, "load", "--verify"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find(",1\n") != std::string::npos);

    r = invoke({"--scratch", scratch, "load", "--verify", "--readers", "1", "--manifest", "ckpt.manifest.json"});
    CHECK(r.code == 0);

    fastckpt::testing::flip_byte(dir / format::shard_file_name("ckpt", 1, 2), 12345);
    r = invoke({"--scratch", scratch, "load", "--verify"});
    CHECK(r.code == 4);
    CHECK_FALSE(r.err.empty());

    std::filesystem::remove(dir / format::shard_file_name("ckpt", 0, 2));
    CHECK(invoke({"--scratch", scratch, "load"}).code == 3);

    CHECK(invoke({"--scratch", scratch, "save", "--synthetic", "1KiB", "--spec", "x.json"}).code == 2);
    CHECK(invoke({"--scratch", scratch, "save", "--synthetic", "1KiB", "--stem", "../escape"}).code == 2);
    CHECK(invoke({"--scratch", scratch, "save", "--synthetic", "1KiB", "--buffer", "1000"}).code == 2);
}

TEST_CASE("save from a spec file and verify against it") {
    ScratchDir dir;
    const std::string scratch = dir.path().string();
    {
        std::ofstream spec(dir / "model.json");
        spec << R"({"seed": 5, "tensors": [
            {"name": "embed", "dtype": "f16", "shape": [33, 7], "fill": "seeded"},
            {"name": "step", "dtype": "i64", "shape": [], "fill": "iota"},
            {"name": "mask", "dtype": "i8", "shape": [0, 4], "fill": "zeros"}]})";
    }
    auto r = invoke({"--scratch", scratch, "save", "--spec", (dir / "model.json").string(), "--stem", "m", "--writers",
                  "fixed:3"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = invoke({"--scratch", scratch, "load", "--stem", "m", "--verify", "--spec", (dir / "model.json").string()});
    CHECK_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find("3,") != std::string::npos);
}

TEST_CASE("a single fixed writer matches the engine's direct output") {
    ScratchDir dir;
    const std::string scratch = dir.path().string();
    REQUIRE(invoke({"--scratch", scratch, "save", "--synthetic", "1MiB", "--writers", "fixed:1"}).code == 0);
    const auto shard = fastckpt::testing::read_file(dir / format::shard_file_name("ckpt", 0, 1));
    const auto stream = format::load_stream_parallel(format::manifest_path(dir.path(), "ckpt"), 1);
    CHECK(shard == stream.bytes);
    io::write_checkpoint(stream.bytes, dir / "direct", io::WriteOptions{});
    CHECK(fastckpt::testing::read_file(dir / "direct") == shard);
}

TEST_CASE("bench") {
    ScratchDir dir;
    const std::string scratch = dir.path().string();
    auto r = invoke({"--scratch", scratch, "bench", "--repeats", "0"});
    CHECK(r.code == 0);
    CHECK(r.out == std::string(io::kBenchCsvHeader) + "\n");

    r = invoke({"--scratch", scratch, "bench", "--sizes", "1MiB", "--buffers", "256KiB..1MiB", "--repeats", "1"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(lines(r.out) == 1 + 3 * 2);
    CHECK(std::filesystem::is_empty(dir.path()));

    r = invoke({"--scratch", (dir / "absent").string(), "bench", "--sizes", "1MiB"});
    CHECK(r.code == 3);
    CHECK_FALSE(std::filesystem::exists(dir / "absent"));
}

TEST_CASE("scratch comes from the environment when set") {
    ScratchDir dir;
    ::setenv("FASTCKPT_SCRATCH", dir.path().c_str(), 1);
    const auto r = invoke({"--scratch", "/definitely/not/here", "save", "--synthetic", "4KiB", "--writers", "replica",
                        "--ranks-per-node", "2", "--sockets", "1"});
    ::unsetenv("FASTCKPT_SCRATCH");
    CHECK_MESSAGE(r.code == 0, r.err);
    CHECK(std::filesystem::exists(format::manifest_path(dir.path(), "ckpt")));
}

TEST_CASE("live simulate writes into scratch") {
    ScratchDir dir;
    const auto r = invoke({"--scratch", dir.path().string(), "simulate", "--live", "--iterations", "2", "--bytes",
                        "256KiB", "--tf", "0.001", "--buffer", "64KiB"});
    CHECK_MESSAGE(r.code == 0, r.err);
    CHECK(std::filesystem::exists(dir / "iter-1"));
}
