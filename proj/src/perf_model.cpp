// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/perf_model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fastckpt/error.hpp"

namespace fastckpt::perf {

namespace {

void require_time(double t, const char* name) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw Error(ErrorKind::Domain, std::string(name) + " must be a finite non-negative time");
    }
}

}  // namespace

ModelProfile ModelProfile::from_params(std::uint64_t param_count, std::uint64_t bytes_per_param) {
    return {param_count, bytes_per_param, estimate_checkpoint_bytes(param_count, bytes_per_param)};
}

void IterationTiming::validate() const {
    require_time(t_forward, "t_forward");
    require_time(t_backward, "t_backward");
    require_time(t_optimizer, "t_optimizer");
    if (gas < 1) {
        throw Error(ErrorKind::Domain, "gas must be >= 1");
    }
}

void RecoverySpec::validate() const {
    if (interval_n < 1) {
        throw Error(ErrorKind::Domain, "checkpoint interval must be >= 1");
    }
    if (gpu_count_m < 1) {
        throw Error(ErrorKind::Domain, "gpu count must be >= 1");
    }
    require_time(iter_time_t, "iteration time");
}

std::uint64_t estimate_checkpoint_bytes(std::uint64_t param_count, std::uint64_t bytes_per_param) {
    std::uint64_t bytes = 0;
    if (__builtin_mul_overflow(param_count, bytes_per_param, &bytes) ||
        bytes > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
        throw Error(ErrorKind::Sizing, "checkpoint size overflows 63 bits: " + std::to_string(param_count) +
                                           " params x " + std::to_string(bytes_per_param) + " bytes");
    }
    return bytes;
}

double required_bandwidth(std::uint64_t checkpoint_bytes, const IterationTiming& timing) {
    timing.validate();
    const double span = timing.compute_seconds();
    if (span <= 0.0) {
        throw Error(ErrorKind::Domain, "gas * (t_forward + t_backward) must be positive");
    }
    return static_cast<double>(checkpoint_bytes) / span;
}

double recovery_overhead(const RecoverySpec& spec) {
    spec.validate();
    return static_cast<double>(spec.interval_n) / 2.0 * static_cast<double>(spec.gpu_count_m) * spec.iter_time_t;
}

}  // namespace fastckpt::perf
