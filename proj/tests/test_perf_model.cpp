// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "fastckpt/error.hpp"
#include "fastckpt/perf_model.hpp"

using namespace fastckpt;
using namespace fastckpt::perf;

namespace {

constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::Setup;
}

}  // namespace

TEST_CASE("checkpoint size is params times bytes per param") {
    CHECK(estimate_checkpoint_bytes(1'300'000'000, 14) == 18'200'000'000ull);
    CHECK(estimate_checkpoint_bytes(1'300'000'000, 14) / kGiB == doctest::Approx(16.95).epsilon(0.001));
    CHECK(estimate_checkpoint_bytes(6'700'000'000, 14) == 93'800'000'000ull);
    CHECK(estimate_checkpoint_bytes(6'700'000'000, 14) / kGiB == doctest::Approx(87.36).epsilon(0.001));
    CHECK(estimate_checkpoint_bytes(0, 14) == 0);

    const auto p = ModelProfile::from_params(2'700'000'000);
    CHECK(p.bytes_per_param == kAdamMixedPrecisionBytesPerParam);
    CHECK(p.checkpoint_bytes == 2'700'000'000ull * 14);
}

TEST_CASE("checkpoint size overflow is a sizing error") {
    const std::uint64_t max = std::numeric_limits<std::int64_t>::max();
    CHECK(estimate_checkpoint_bytes(max, 1) == max);
    CHECK(kind_of([&] { estimate_checkpoint_bytes(max / 14 + 1, 14); }) == ErrorKind::Sizing);
    CHECK(kind_of([&] { estimate_checkpoint_bytes(std::numeric_limits<std::uint64_t>::max(), 2); }) ==
          ErrorKind::Sizing);
    CHECK(kind_of([&] { estimate_checkpoint_bytes(max + 1, 1); }) == ErrorKind::Sizing);
}

TEST_CASE("required bandwidth") {
    const IterationTiming t{0.309, 0.0, 0.0, 1};
    const double gb_per_s = required_bandwidth(17ull << 30, t) / 1e9;
    CHECK(gb_per_s == doctest::Approx(59.0).epsilon(0.02));

    CHECK(required_bandwidth(0, {1.0, 2.0, 0.0, 3}) == 0.0);
    CHECK(required_bandwidth(100, {50.0, 0.0, 0.0, 1}) == 2.0);
    CHECK(required_bandwidth(100, {20.0, 5.0, 99.0, 2}) == 2.0);  // optimizer time is not in the window

    CHECK(kind_of([] { required_bandwidth(1, {0.0, 0.0, 1.0, 1}); }) == ErrorKind::Domain);
    CHECK(kind_of([] { required_bandwidth(0, {0.0, 0.0, 0.0, 4}); }) == ErrorKind::Domain);
    CHECK(kind_of([] { required_bandwidth(1, {1.0, 1.0, 0.0, 0}); }) == ErrorKind::Domain);
    CHECK(kind_of([] { required_bandwidth(1, {-1.0, 1.0, 0.0, 1}); }) == ErrorKind::Domain);
}

TEST_CASE("required bandwidth is homogeneous in size") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> secs(1e-3, 10.0);
    for (int i = 0; i < 500; ++i) {
        const std::uint64_t bytes = rng() >> 24;
        const std::uint64_t k = 1 + rng() % 64;
        const IterationTiming t{secs(rng), secs(rng), 0.0, static_cast<std::uint32_t>(1 + rng() % 512)};
        const double base = required_bandwidth(bytes, t);
        CHECK(required_bandwidth(bytes * k, t) == doctest::Approx(base * static_cast<double>(k)).epsilon(1e-14));
    }
}

TEST_CASE("recovery overhead") {
    CHECK(recovery_overhead({1, 1000, 10.0}) == 5000.0);
    CHECK(recovery_overhead({100, 1000, 10.0}) == 500000.0);
    CHECK(recovery_overhead({100, 1000, 10.0}) / recovery_overhead({1, 1000, 10.0}) == 100.0);
    CHECK(recovery_overhead({2, 1, 0.0}) == 0.0);
    CHECK(recovery_overhead({3, 1, 1.0}) == 1.5);  // n/2 is not truncated

    CHECK(kind_of([] { recovery_overhead({0, 1, 1.0}); }) == ErrorKind::Domain);
    CHECK(kind_of([] { recovery_overhead({1, 0, 1.0}); }) == ErrorKind::Domain);
    CHECK(kind_of([] { recovery_overhead({1, 1, -1.0}); }) == ErrorKind::Domain);
}

TEST_CASE("recovery overhead is linear in each argument") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> secs(0.0, 100.0);
    for (int i = 0; i < 500; ++i) {
        const std::uint64_t n = 1 + rng() % 10000;
        const std::uint64_t m = 1 + rng() % 10000;
        const double t = secs(rng);
        const std::uint64_t k = 1 + rng() % 16;
        const double base = recovery_overhead({n, m, t});
        CHECK(recovery_overhead({n * k, m, t}) == doctest::Approx(base * k).epsilon(1e-14));
        CHECK(recovery_overhead({n, m * k, t}) == doctest::Approx(base * k).epsilon(1e-14));
        CHECK(recovery_overhead({n, m, t * k}) == doctest::Approx(base * k).epsilon(1e-14));
    }
}
