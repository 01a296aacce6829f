// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytical checkpoint models: state sizing, the write bandwidth needed to
// hide a checkpoint behind forward/backward compute, and the expected GPU
// time lost to recovery for a given checkpoint interval.

#pragma once

#include <cstdint>

namespace fastckpt::perf {

/// Mixed-precision ADAM: fp16 weights (2 bytes) plus 12 bytes of fp32
/// optimizer state per parameter.
inline constexpr std::uint64_t kAdamMixedPrecisionBytesPerParam = 14;

struct ModelProfile {
    std::uint64_t param_count = 0;
    std::uint64_t bytes_per_param = kAdamMixedPrecisionBytesPerParam;
    std::uint64_t checkpoint_bytes = 0;

    static ModelProfile from_params(std::uint64_t param_count,
                                    std::uint64_t bytes_per_param = kAdamMixedPrecisionBytesPerParam);
};

struct IterationTiming {
    double t_forward = 0.0;
    double t_backward = 0.0;
    double t_optimizer = 0.0;  // not part of the bandwidth target
    std::uint32_t gas = 1;     // gradient accumulation steps

    double compute_seconds() const { return gas * (t_forward + t_backward); }
    void validate() const;
};

struct RecoverySpec {
    std::uint64_t interval_n = 1;
    std::uint64_t gpu_count_m = 1;
    double iter_time_t = 0.0;

    void validate() const;
};

/// param_count * bytes_per_param; throws Error(Sizing) if the product does
/// not fit in a signed 64-bit byte count.
std::uint64_t estimate_checkpoint_bytes(std::uint64_t param_count, std::uint64_t bytes_per_param);

/// Bytes/second needed so that writing the checkpoint takes no longer than
/// gas * (t_forward + t_backward). Throws Error(Domain) if that span is 0.
double required_bandwidth(std::uint64_t checkpoint_bytes, const IterationTiming& timing);

/// Expected GPU-seconds repeated after a failure that lands uniformly in
/// a checkpoint interval: (n / 2) * m * t.
double recovery_overhead(const RecoverySpec& spec);

}  // namespace fastckpt::perf
