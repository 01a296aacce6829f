// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint scheduling around the training loop. The trainer runs
// forward/backward, waits for the previous checkpoint to finish before its
// optimizer step, then hands the next checkpoint to a persister and moves
// on. Two drivers share that handshake:
//
//  * simulate(): a discrete-event model with exact phase durations.
//  * run_live(): a real trainer thread (compute phases are timed waits) and a
//    persister thread that writes sharded checkpoints through the engine.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "fastckpt/error.hpp"
#include "fastckpt/partition_planner.hpp"
#include "fastckpt/write_engine.hpp"

namespace fastckpt::sim {

enum class ScheduleMode { Sequential, Pipelined, NoCheckpoint };

std::string_view to_string(ScheduleMode mode);
/// "sequential" / "pipelined" / "none"
std::optional<ScheduleMode> parse_schedule_mode(std::string_view text);

struct TrainConfig {
    std::uint32_t gas = 1;
    double t_forward = 0.0;   // per micro-step
    double t_backward = 0.0;  // per micro-step
    double t_optimizer = 0.0;
    std::uint32_t iterations = 1;
    ScheduleMode mode = ScheduleMode::Pipelined;

    double compute_seconds() const { return static_cast<double>(gas) * (t_forward + t_backward); }
    void validate() const;
};

struct SyntheticSink {
    double bandwidth = 0.0;  // bytes/second
};

struct LiveSink {
    std::filesystem::path scratch_dir;
    io::WriteOptions write;
    /// Defaults to one writer per co-located rank (Replica over writer_count).
    std::optional<plan::PartitionPlan> plan;
    std::uint32_t tensor_count = 8;
    std::uint64_t seed = 1;
};

struct CkptTask {
    std::uint64_t bytes = 0;  // payload bytes of the model state
    std::variant<SyntheticSink, LiveSink> sink;
};

enum class Phase { F, B, O, CkptReq, CkptDone, Stall };

std::string_view to_string(Phase phase);

struct Event {
    std::uint64_t seq = 0;
    std::uint32_t iter = 0;
    Phase phase = Phase::F;
    double start_s = 0.0;
    double end_s = 0.0;
};

/// Work attributed to each actor. The persister only reads existing device
/// tensors and never joins a collective.
struct ActorCounters {
    std::uint64_t device_allocations = 0;
    std::uint64_t collective_calls = 0;
};

struct SimResult {
    ScheduleMode mode = ScheduleMode::Pipelined;
    std::uint32_t gas = 1;
    std::vector<double> iter_times;
    double steady_state_iter_time = 0.0;  // mean excluding iteration 0
    double slowdown = 1.0;                // vs. the same run without checkpoints
    double stall_seconds = 0.0;           // trainer blocked on checkpoints
    double drain_seconds = 0.0;           // final wait after the last iteration
    std::vector<double> ckpt_seconds;
    std::vector<Event> events;

    // Live runs only.
    std::vector<std::filesystem::path> manifests;
    ActorCounters trainer_counters;
    ActorCounters persister_counters;
};

/// Thrown by run_live when a checkpoint write fails.
class RunAborted : public Error {
public:
    RunAborted(std::uint32_t iteration, const std::string& what)
        : Error(ErrorKind::Io, what), iteration_(iteration) {}

    std::uint32_t iteration() const noexcept { return iteration_; }

private:
    std::uint32_t iteration_;
};

/// Checkpoint duration bytes / bandwidth. Throws Error(Domain) for a zero
/// or invalid bandwidth with a non-zero size.
double checkpoint_seconds(std::uint64_t bytes, double bandwidth);

SimResult simulate(const TrainConfig& train, const CkptTask& ckpt);

SimResult run_live(const TrainConfig& train, const CkptTask& ckpt, std::uint32_t writer_count);

struct GasSweepRow {
    std::uint32_t gas = 1;
    SimResult result;
};

/// Pipelined and Sequential results for every gas value.
std::vector<GasSweepRow> gas_sweep(const TrainConfig& base, std::span<const std::uint32_t> gas_values,
                                   const CkptTask& ckpt);

/// Applies the optimizer's in-place update `steps` times to freshly
/// materialized state. Used to predict the contents of a live checkpoint.
void apply_optimizer_steps(std::vector<format::TensorRecord>& tensors, std::uint64_t steps);

// CSV ----------------------------------------------------------------------------

inline constexpr std::string_view kEventCsvHeader = "iter,phase,start_s,end_s";
inline constexpr std::string_view kSummaryCsvHeader =
    "mode,gas,iterations,steady_state_iter_s,slowdown,stall_s";

void write_events_csv(std::ostream& out, std::span<const Event> events);
void write_summary_csv(std::ostream& out, std::span<const SimResult> results);

// Log checks -------------------------------------------------------------------

/// Checkpoint i completes before optimizer i+1 starts, by sequence and time.
bool happens_before_holds(std::span<const Event> events);
/// No checkpoint request is issued while another is still outstanding.
bool single_outstanding_holds(std::span<const Event> events);

}  // namespace fastckpt::sim
