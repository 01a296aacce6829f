// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/pipeline_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include "fastckpt/synthetic.hpp"

namespace fastckpt::sim {

namespace {

using Clock = std::chrono::steady_clock;

class EventLog {
public:
    void append(std::uint32_t iter, Phase phase, double start, double end) {
        std::lock_guard lock(mu_);
        events_.push_back({events_.size(), iter, phase, start, end});
    }

    std::vector<Event> take() {
        std::lock_guard lock(mu_);
        return std::move(events_);
    }

private:
    std::mutex mu_;
    std::vector<Event> events_;
};

// Running mean that returns the common value exactly when all samples agree.
double steady_state(const std::vector<double>& iter_times) {
    if (iter_times.empty()) {
        return 0.0;
    }
    const std::size_t first = iter_times.size() > 1 ? 1 : 0;
    double mean = iter_times[first];
    for (std::size_t i = first + 1; i < iter_times.size(); ++i) {
        mean += (iter_times[i] - mean) / static_cast<double>(i - first + 1);
    }
    return mean;
}

double slowdown_ratio(double steady, double baseline) {
    if (baseline > 0.0) {
        return steady / baseline;
    }
    return steady > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
}

// Model state living in (simulated) accelerator memory.
class SimulatedDevice {
public:
    void allocate(const synth::ModelSpec& model, ActorCounters& actor) {
        tensors_ = synth::materialize(model);
        actor.device_allocations += tensors_.size();
    }

    const std::vector<format::TensorRecord>& tensors() const { return tensors_; }

    void all_reduce_gradients(ActorCounters& actor) { ++actor.collective_calls; }

    void optimizer_step() { apply_optimizer_steps(tensors_, 1); }

private:
    std::vector<format::TensorRecord> tensors_;
};

// Request/completion handshake between trainer and persister.
class Mailbox {
public:
    struct Completion {
        std::uint32_t iter = 0;
        double seconds = 0.0;
        std::exception_ptr error;
    };

    void post_request(std::uint32_t iter) {
        {
            std::lock_guard lock(mu_);
            request_ = iter;
            outstanding_ = true;
        }
        cv_.notify_all();
    }

    std::optional<std::uint32_t> wait_request() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return request_.has_value() || shutdown_; });
        if (!request_) {
            return std::nullopt;
        }
        return std::exchange(request_, std::nullopt);
    }

    void post_done(Completion done) {
        {
            std::lock_guard lock(mu_);
            done_ = std::move(done);
        }
        cv_.notify_all();
    }

    Completion wait_done() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return done_.has_value(); });
        outstanding_ = false;
        auto out = std::move(*done_);
        done_.reset();
        return out;
    }

    bool outstanding() {
        std::lock_guard lock(mu_);
        return outstanding_;
    }

    void shutdown() {
        {
            std::lock_guard lock(mu_);
            shutdown_ = true;
        }
        cv_.notify_all();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::optional<std::uint32_t> request_;
    std::optional<Completion> done_;
    bool outstanding_ = false;
    bool shutdown_ = false;
};

}  // namespace

std::string_view to_string(ScheduleMode mode) {
    switch (mode) {
        case ScheduleMode::Sequential: return "sequential";
        case ScheduleMode::Pipelined: return "pipelined";
        case ScheduleMode::NoCheckpoint: return "none";
    }
    return "unknown";
}

std::optional<ScheduleMode> parse_schedule_mode(std::string_view text) {
    for (auto m : {ScheduleMode::Sequential, ScheduleMode::Pipelined, ScheduleMode::NoCheckpoint}) {
        if (to_string(m) == text) {
            return m;
        }
    }
    return std::nullopt;
}

std::string_view to_string(Phase phase) {
    switch (phase) {
        case Phase::F: return "F";
        case Phase::B: return "B";
        case Phase::O: return "O";
        case Phase::CkptReq: return "CKPT_REQ";
        case Phase::CkptDone: return "CKPT_DONE";
        case Phase::Stall: return "STALL";
    }
    return "?";
}

void TrainConfig::validate() const {
    for (double t : {t_forward, t_backward, t_optimizer}) {
        if (!(t >= 0.0) || !std::isfinite(t)) {
            throw Error(ErrorKind::Domain, "phase times must be finite and non-negative");
        }
    }
    if (gas < 1) {
        throw Error(ErrorKind::Domain, "gas must be >= 1");
    }
    if (iterations < 1) {
        throw Error(ErrorKind::Domain, "iterations must be >= 1");
    }
}

double checkpoint_seconds(std::uint64_t bytes, double bandwidth) {
    if (bytes == 0) {
        return 0.0;
    }
    if (!(bandwidth > 0.0) || std::isnan(bandwidth)) {
        throw Error(ErrorKind::Domain, "checkpoint of " + std::to_string(bytes) + " bytes needs a positive bandwidth");
    }
    return static_cast<double>(bytes) / bandwidth;
}

void apply_optimizer_steps(std::vector<format::TensorRecord>& tensors, std::uint64_t steps) {
    for (auto& t : tensors) {
        if (!t.payload.empty()) {
            t.payload[0] = static_cast<std::byte>(static_cast<std::uint64_t>(t.payload[0]) + steps);
        }
    }
}

SimResult simulate(const TrainConfig& train, const CkptTask& ckpt) {
    train.validate();
    const auto* sink = std::get_if<SyntheticSink>(&ckpt.sink);
    if (sink == nullptr) {
        throw Error(ErrorKind::Config, "simulate() needs a synthetic bandwidth sink");
    }
    const double t_ckpt = checkpoint_seconds(ckpt.bytes, sink->bandwidth);
    const double step = train.t_forward + train.t_backward;
    const double compute = train.compute_seconds();
    const double t_opt = train.t_optimizer;

    SimResult r;
    r.mode = train.mode;
    r.gas = train.gas;
    EventLog log;

    // Times inside an iteration are relative to its start, which is also when
    // the previous checkpoint was requested. That keeps every iteration
    // duration equal to its closed form bit for bit.
    double t0 = 0.0;
    bool pending = false;
    for (std::uint32_t i = 0; i < train.iterations; ++i) {
        for (std::uint32_t m = 0; m < train.gas; ++m) {
            const double f_begin = static_cast<double>(m) * step;
            const double f_end = f_begin + train.t_forward;
            log.append(i, Phase::F, t0 + f_begin, t0 + f_end);
            log.append(i, Phase::B, t0 + f_end, t0 + static_cast<double>(m + 1) * step);
        }

        double iter = 0.0;
        switch (train.mode) {
            case ScheduleMode::Pipelined: {
                double opt_begin = compute;
                if (pending) {
                    opt_begin = std::max(compute, t_ckpt);
                    log.append(i - 1, Phase::CkptDone, t0, t0 + t_ckpt);
                    r.ckpt_seconds.push_back(t_ckpt);
                    const double stall = opt_begin - compute;
                    if (stall > 0.0) {
                        log.append(i, Phase::Stall, t0 + compute, t0 + opt_begin);
                        r.stall_seconds += stall;
                    }
                }
                iter = opt_begin + t_opt;
                log.append(i, Phase::O, t0 + opt_begin, t0 + iter);
                log.append(i, Phase::CkptReq, t0 + iter, t0 + iter);
                pending = true;
                break;
            }
            case ScheduleMode::Sequential: {
                const double req = compute + t_opt;
                iter = compute + t_opt + t_ckpt;
                log.append(i, Phase::O, t0 + compute, t0 + req);
                log.append(i, Phase::CkptReq, t0 + req, t0 + req);
                if (t_ckpt > 0.0) {
                    log.append(i, Phase::Stall, t0 + req, t0 + iter);
                    r.stall_seconds += t_ckpt;
                }
                log.append(i, Phase::CkptDone, t0 + req, t0 + iter);
                r.ckpt_seconds.push_back(t_ckpt);
                break;
            }
            case ScheduleMode::NoCheckpoint:
                iter = compute + t_opt;
                log.append(i, Phase::O, t0 + compute, t0 + iter);
                break;
        }
        r.iter_times.push_back(iter);
        t0 += iter;
    }
    if (pending) {
        log.append(train.iterations - 1, Phase::CkptDone, t0, t0 + t_ckpt);
        r.ckpt_seconds.push_back(t_ckpt);
        r.drain_seconds = t_ckpt;
    }

    r.events = log.take();
    r.steady_state_iter_time = steady_state(r.iter_times);
    r.slowdown = slowdown_ratio(r.steady_state_iter_time, compute + t_opt);
    return r;
}

SimResult run_live(const TrainConfig& train, const CkptTask& ckpt, std::uint32_t writer_count) {
    train.validate();
    const auto* sink = std::get_if<LiveSink>(&ckpt.sink);
    if (sink == nullptr) {
        throw Error(ErrorKind::Config, "run_live() needs a live write-engine sink");
    }
    if (writer_count < 1) {
        throw Error(ErrorKind::Config, "writer_count must be >= 1");
    }
    std::error_code ec;
    if (!std::filesystem::is_directory(sink->scratch_dir, ec)) {
        throw Error(ErrorKind::Setup, "scratch directory " + sink->scratch_dir.string() + " does not exist");
    }

    SimResult r;
    r.mode = train.mode;
    r.gas = train.gas;

    SimulatedDevice device;
    const auto model = synth::synthetic_model(ckpt.bytes, sink->tensor_count, sink->seed);
    device.allocate(model, r.trainer_counters);
    const auto total = format::serialized_size(device.tensors());

    plan::PartitionPlan layout;
    if (sink->plan) {
        layout = *sink->plan;
        if (layout.total_bytes != total) {
            throw Error(ErrorKind::Plan, "plan covers " + std::to_string(layout.total_bytes) +
                                             " bytes, checkpoint serializes to " + std::to_string(total));
        }
    } else {
        const plan::Topology topo{1, 1, writer_count, 0.0};
        layout = plan::make_plan(total, plan::all_ranks(topo), plan::WriterStrategy::replica(), topo);
    }

    const auto start = Clock::now();
    auto now = [&] { return std::chrono::duration<double>(Clock::now() - start).count(); };
    auto wait_for = [](double seconds) {
        if (seconds > 0.0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
        }
    };

    EventLog log;
    Mailbox mailbox;
    std::vector<std::filesystem::path> manifests(train.iterations);

    std::jthread persister([&] {
        while (auto iter = mailbox.wait_request()) {
            const double begin = now();
            Mailbox::Completion done{*iter, 0.0, nullptr};
            try {
                const auto stream = format::serialize(device.tensors());
                const auto dir = sink->scratch_dir / ("iter-" + std::to_string(*iter));
                manifests[*iter] = io::save_sharded(stream.bytes, layout, dir, "ckpt", sink->write).manifest_file;
            } catch (...) {
                done.error = std::current_exception();
            }
            const double end = now();
            done.seconds = end - begin;
            log.append(*iter, Phase::CkptDone, begin, end);
            mailbox.post_done(std::move(done));
        }
    });
    struct StopPersister {
        Mailbox& mailbox;
        ~StopPersister() { mailbox.shutdown(); }
    } stop_persister{mailbox};

    auto await_checkpoint = [&](std::uint32_t iter) {
        const double begin = now();
        auto done = mailbox.wait_done();
        const double end = now();
        log.append(iter, Phase::Stall, begin, end);
        r.ckpt_seconds.push_back(done.seconds);
        if (done.error) {
            try {
                std::rethrow_exception(done.error);
            } catch (const std::exception& e) {
                throw RunAborted(done.iter, "checkpoint of iteration " + std::to_string(done.iter) +
                                                " failed: " + e.what());
            }
        }
        return end - begin;
    };

    for (std::uint32_t i = 0; i < train.iterations; ++i) {
        const double iter_begin = now();
        for (std::uint32_t m = 0; m < train.gas; ++m) {
            double begin = now();
            wait_for(train.t_forward);
            double end = now();
            log.append(i, Phase::F, begin, end);
            begin = end;
            wait_for(train.t_backward);
            end = now();
            log.append(i, Phase::B, begin, end);
        }
        device.all_reduce_gradients(r.trainer_counters);

        if (train.mode == ScheduleMode::Pipelined && mailbox.outstanding()) {
            r.stall_seconds += await_checkpoint(i);
        }
        const double opt_begin = now();
        wait_for(train.t_optimizer);
        device.optimizer_step();
        const double opt_end = now();
        log.append(i, Phase::O, opt_begin, opt_end);

        if (train.mode != ScheduleMode::NoCheckpoint) {
            log.append(i, Phase::CkptReq, opt_end, opt_end);
            mailbox.post_request(i);
            if (train.mode == ScheduleMode::Sequential) {
                r.stall_seconds += await_checkpoint(i);
            }
        }
        r.iter_times.push_back(now() - iter_begin);
    }
    if (mailbox.outstanding()) {
        const double begin = now();
        auto done = mailbox.wait_done();
        r.ckpt_seconds.push_back(done.seconds);
        r.drain_seconds = now() - begin;
        if (done.error) {
            try {
                std::rethrow_exception(done.error);
            } catch (const std::exception& e) {
                throw RunAborted(done.iter, "checkpoint of iteration " + std::to_string(done.iter) +
                                                " failed: " + e.what());
            }
        }
    }

    r.events = log.take();
    if (train.mode != ScheduleMode::NoCheckpoint) {
        r.manifests = std::move(manifests);
    }
    r.steady_state_iter_time = steady_state(r.iter_times);
    r.slowdown = slowdown_ratio(r.steady_state_iter_time, train.compute_seconds() + train.t_optimizer);
    return r;
}

std::vector<GasSweepRow> gas_sweep(const TrainConfig& base, std::span<const std::uint32_t> gas_values,
                                   const CkptTask& ckpt) {
    std::vector<GasSweepRow> rows;
    rows.reserve(gas_values.size() * 2);
    for (auto gas : gas_values) {
        for (auto mode : {ScheduleMode::Pipelined, ScheduleMode::Sequential}) {
            auto cfg = base;
            cfg.gas = gas;
            cfg.mode = mode;
            rows.push_back({gas, simulate(cfg, ckpt)});
        }
    }
    return rows;
}

void write_events_csv(std::ostream& out, std::span<const Event> events) {
    out << kEventCsvHeader << '\n' << std::fixed << std::setprecision(9);
    for (const auto& e : events) {
        out << e.iter << ',' << to_string(e.phase) << ',' << e.start_s << ',' << e.end_s << '\n';
    }
    out << std::defaultfloat;
}

void write_summary_csv(std::ostream& out, std::span<const SimResult> results) {
    out << kSummaryCsvHeader << '\n' << std::setprecision(12);
    for (const auto& r : results) {
        out << to_string(r.mode) << ',' << r.gas << ',' << r.iter_times.size() << ',' << r.steady_state_iter_time
            << ',' << r.slowdown << ',' << r.stall_seconds << '\n';
    }
    out << std::setprecision(6);
}

bool happens_before_holds(std::span<const Event> events) {
    std::map<std::uint32_t, const Event*> done;
    std::map<std::uint32_t, const Event*> optimizer;
    for (const auto& e : events) {
        if (e.phase == Phase::CkptDone) {
            done[e.iter] = &e;
        } else if (e.phase == Phase::O) {
            optimizer[e.iter] = &e;
        }
    }
    for (const auto& [iter, d] : done) {
        auto next = optimizer.find(iter + 1);
        if (next == optimizer.end()) {
            continue;
        }
        if (d->seq >= next->second->seq || d->end_s > next->second->start_s) {
            return false;
        }
    }
    // Every request must eventually complete.
    for (const auto& e : events) {
        if (e.phase == Phase::CkptReq && !done.contains(e.iter)) {
            return false;
        }
    }
    return true;
}

bool single_outstanding_holds(std::span<const Event> events) {
    std::vector<const Event*> ordered;
    for (const auto& e : events) {
        if (e.phase == Phase::CkptReq || e.phase == Phase::CkptDone) {
            ordered.push_back(&e);
        }
    }
    std::sort(ordered.begin(), ordered.end(), [](const Event* a, const Event* b) { return a->seq < b->seq; });
    std::optional<std::uint32_t> outstanding;
    for (const auto* e : ordered) {
        if (e->phase == Phase::CkptReq) {
            if (outstanding) {
                return false;
            }
            outstanding = e->iter;
        } else {
            if (outstanding != e->iter) {
                return false;
            }
            outstanding.reset();
        }
    }
    return true;
}

}  // namespace fastckpt::sim
