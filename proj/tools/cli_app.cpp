// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli_app.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fastckpt/ckpt_format.hpp"
#include "fastckpt/partition_planner.hpp"
#include "fastckpt/perf_model.hpp"
#include "fastckpt/pipeline_sim.hpp"
#include "fastckpt/synthetic.hpp"
#include "fastckpt/units.hpp"
#include "fastckpt/write_engine.hpp"

namespace fastckpt::cli {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void usage(const std::string& what) {
    throw Error(ErrorKind::Config, what);
}

fs::path resolve_scratch(const std::string& flag) {
    fs::path dir = flag;
    if (const char* env = std::getenv("FASTCKPT_SCRATCH"); env != nullptr && *env != '\0') {
        dir = env;
    }
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) {
        throw Error(ErrorKind::Setup, "scratch directory '" + dir.string() + "' does not exist");
    }
    if (::access(dir.c_str(), W_OK) != 0) {
        throw Error(ErrorKind::Setup, "scratch directory '" + dir.string() + "' is not writable");
    }
    return dir;
}

void require_plain_name(const std::string& stem) {
    if (stem.empty() || stem.find('/') != std::string::npos || stem == "." || stem == "..") {
        usage("--stem must be a plain file name");
    }
}

fs::path inside_scratch(const fs::path& scratch, const std::string& name) {
    fs::path p = name;
    return p.is_absolute() ? p : scratch / p;
}

struct TopologyFlags {
    std::uint32_t nodes = 1;
    std::uint32_t sockets = 2;
    std::uint32_t ranks_per_node = 16;
    std::uint32_t dp = 0;  // 0: every rank in the topology
    std::string writers = "socket";

    void add_to(CLI::App* cmd) {
        cmd->add_option("--nodes", nodes, "Node count")->capture_default_str();
        cmd->add_option("--sockets", sockets, "CPU sockets per node")->capture_default_str();
        cmd->add_option("--ranks-per-node", ranks_per_node, "Ranks (accelerators) per node")->capture_default_str();
        cmd->add_option("--dp", dp, "Data-parallel degree: ranks 0..dp-1 (0 = all ranks)")->capture_default_str();
        cmd->add_option("--writers", writers, "replica | socket | fixed:<k>")->capture_default_str();
    }

    plan::Topology topology() const { return {nodes, sockets, ranks_per_node, 24.8e9}; }

    std::vector<plan::RankId> dp_ranks() const {
        auto ranks = plan::all_ranks(topology());
        if (dp > ranks.size()) {
            usage("--dp " + std::to_string(dp) + " exceeds the " + std::to_string(ranks.size()) + " ranks");
        }
        if (dp > 0) {
            ranks.resize(dp);
        }
        return ranks;
    }

    plan::PartitionPlan make(std::uint64_t total) const {
        return plan::make_plan(total, dp_ranks(), plan::WriterStrategy::parse(writers), topology());
    }
};

struct EngineFlags {
    std::string buffer = "8MiB";
    std::string mode = "double";
    std::uint64_t alignment = 512;
    std::uint32_t queue_depth = 8;
    bool buffered = false;

    void add_to(CLI::App* cmd, const char* mode_flag = "--mode") {
        cmd->add_option("--buffer", buffer, "IO buffer (staging) size")->capture_default_str();
        cmd->add_option(mode_flag, mode, "single | double")->capture_default_str();
        cmd->add_option("--alignment", alignment, "Direct I/O alignment in bytes")->capture_default_str();
        cmd->add_option("--queue-depth", queue_depth, "Concurrent direct requests per flush")->capture_default_str();
        cmd->add_flag("--no-direct", buffered, "Write through the page cache");
    }

    io::WriteOptions options() const {
        io::WriteOptions o;
        const auto m = io::parse_write_mode(mode);
        if (!m) {
            usage("write mode must be single or double, got '" + mode + "'");
        }
        o.mode = *m;
        o.buffer_bytes = parse_size(buffer);
        o.alignment = alignment;
        o.queue_depth = queue_depth;
        o.direct = !buffered;
        o.validate();
        return o;
    }
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Load, "cannot read " + path.string());
    }
    std::stringstream text;
    text << in.rdbuf();
    return text.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
    if (!out) {
        throw IoError(0, "cannot write " + path.string());
    }
}

fs::path sidecar_path(const fs::path& dir, const std::string& stem) {
    return dir / (stem + ".spec.json");
}

// bench ---------------------------------------------------------------------------

struct BenchFlags {
    std::string sizes = "16MiB,512MiB";
    std::string buffers = "2MiB..128MiB";
    std::string modes = "single,double";
    std::uint32_t repeats = 1;
    std::uint64_t alignment = 512;
    std::uint32_t queue_depth = 8;
    bool buffered = false;
};

int cmd_bench(const BenchFlags& f, const std::string& scratch_flag, std::uint64_t seed, std::ostream& out) {
    io::BenchConfig cfg;
    cfg.scratch_dir = resolve_scratch(scratch_flag);
    cfg.sizes = parse_size_list(f.sizes);
    cfg.buffer_sizes = parse_size_list(f.buffers);
    std::stringstream modes(f.modes);
    for (std::string item; std::getline(modes, item, ',');) {
        const auto m = io::parse_write_mode(item);
        if (!m) {
            usage("unknown write mode '" + item + "'");
        }
        cfg.modes.push_back(*m);
    }
    cfg.repeats = f.repeats;
    cfg.alignment = f.alignment;
    cfg.queue_depth = f.queue_depth;
    cfg.direct = !f.buffered;
    cfg.seed = seed;
    const auto rows = io::bench_write(cfg);
    io::write_bench_csv(out, rows);
    return kExitOk;
}

// save / load ---------------------------------------------------------------------

struct SaveFlags {
    std::string spec;
    std::string synthetic;
    std::uint32_t tensors = 16;
    std::string stem = "ckpt";
    TopologyFlags topo;
    EngineFlags engine;
};

int cmd_save(const SaveFlags& f, const std::string& scratch_flag, std::uint64_t seed, std::ostream& out) {
    if (f.spec.empty() == f.synthetic.empty()) {
        usage("save needs exactly one of --spec or --synthetic");
    }
    require_plain_name(f.stem);
    const auto opts = f.engine.options();
    const auto strategy = plan::WriterStrategy::parse(f.topo.writers);
    const auto scratch = resolve_scratch(scratch_flag);

    const auto model = f.spec.empty() ? synth::synthetic_model(parse_size(f.synthetic), f.tensors, seed)
                                      : synth::ModelSpec::from_json(read_text(f.spec));
    format::SerializedStream stream;
    {
        const auto records = synth::materialize(model);
        stream = format::serialize(records);
    }
    const auto layout = plan::make_plan(stream.bytes.size(), f.topo.dp_ranks(), strategy, f.topo.topology());
    const auto result = io::save_sharded(stream.bytes, layout, scratch, f.stem, opts);
    write_text(sidecar_path(scratch, f.stem), model.to_json());

    out << "writer_id,shard,offset,length,wall_seconds,throughput_bps,direct_writes,buffered_writes,fallback\n";
    for (std::size_t i = 0; i < layout.assignments.size(); ++i) {
        const auto& a = layout.assignments[i];
        const auto& s = result.writer_stats[i];
        out << a.rank << ',' << i << ',' << a.offset << ',' << a.length << ',' << std::fixed << std::setprecision(9)
            << s.wall_seconds << ',' << std::setprecision(1) << s.throughput << std::defaultfloat << ','
            << s.direct_write_count << ',' << s.buffered_write_count << ',' << (s.fallback ? 1 : 0) << '\n';
    }
    return kExitOk;
}

struct LoadFlags {
    std::string manifest;
    std::string stem = "ckpt";
    std::uint32_t readers = 4;
    bool verify = false;
    std::string spec;
};

int cmd_load(const LoadFlags& f, const std::string& scratch_flag, std::ostream& out, std::ostream& err) {
    const auto scratch = resolve_scratch(scratch_flag);
    if (f.readers < 1) {
        usage("--readers must be >= 1");
    }
    fs::path manifest;
    if (f.manifest.empty()) {
        require_plain_name(f.stem);
        manifest = format::manifest_path(scratch, f.stem);
    } else {
        manifest = inside_scratch(scratch, f.manifest);
    }
    const auto start = std::chrono::steady_clock::now();
    const auto records = format::load_parallel(manifest, f.readers);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    bool verified = false;
    if (f.verify) {
        const auto spec_file = f.spec.empty()
                                   ? sidecar_path(manifest.parent_path(), format::stem_from_manifest_path(manifest))
                                   : fs::path(f.spec);
        const auto model = synth::ModelSpec::from_json(read_text(spec_file));
        if (auto diff = synth::verify(model, records)) {
            err << "verification failed: " << *diff << '\n';
            return kExitVerify;
        }
        verified = true;
    }
    std::uint64_t total = 0;
    for (const auto& r : records) {
        total += r.payload.size();
    }
    out << "tensors,payload_bytes,readers,wall_seconds,verified\n"
        << records.size() << ',' << total << ',' << f.readers << ',' << std::fixed << std::setprecision(9) << wall
        << std::defaultfloat << ',' << (verified ? 1 : 0) << '\n';
    return kExitOk;
}

// plan -------------------------------------------------------------------------

int cmd_plan(const std::string& bytes, const TopologyFlags& topo, std::ostream& out) {
    out << topo.make(parse_size(bytes)).to_json();
    return kExitOk;
}

// simulate ---------------------------------------------------------------------

struct SimulateFlags {
    std::string mode = "pipelined";
    std::uint32_t gas = 1;
    double tf = 0.0;
    double tb = 0.0;
    double to = 0.0;
    std::uint32_t iterations = 10;
    std::string bytes = "0";
    double bandwidth = 0.0;
    std::string gas_sweep;
    bool events = false;
    bool live = false;
    std::uint32_t writer_count = 1;
    std::uint32_t tensors = 8;
    EngineFlags engine;
};

int cmd_simulate(const SimulateFlags& f, const std::string& scratch_flag, std::uint64_t seed, std::ostream& out) {
    const auto mode = sim::parse_schedule_mode(f.mode);
    if (!mode) {
        usage("--mode must be sequential, pipelined or none");
    }
    sim::TrainConfig train;
    train.gas = f.gas;
    train.t_forward = f.tf;
    train.t_backward = f.tb;
    train.t_optimizer = f.to;
    train.iterations = f.iterations;
    train.mode = *mode;

    sim::CkptTask task;
    task.bytes = parse_size(f.bytes);

    if (f.live) {
        if (!f.gas_sweep.empty()) {
            usage("--gas-sweep runs on the synthetic model only; drop --live");
        }
        sim::LiveSink live;
        live.scratch_dir = resolve_scratch(scratch_flag);
        live.write = f.engine.options();
        live.tensor_count = f.tensors;
        live.seed = seed;
        task.sink = live;
        const auto r = sim::run_live(train, task, f.writer_count);
        if (f.events) {
            sim::write_events_csv(out, r.events);
        } else {
            sim::write_summary_csv(out, std::span(&r, 1));
        }
        return kExitOk;
    }

    if (task.bytes > 0 && !(f.bandwidth > 0.0)) {
        usage("--bandwidth (bytes/s) is required when --bytes > 0");
    }
    task.sink = sim::SyntheticSink{f.bandwidth};

    if (!f.gas_sweep.empty()) {
        if (f.events) {
            usage("--events cannot be combined with --gas-sweep");
        }
        std::vector<std::uint32_t> gas_values;
        for (auto g : parse_size_list(f.gas_sweep)) {
            if (g < 1 || g > UINT32_MAX) {
                usage("gas values must be in [1, 2^32)");
            }
            gas_values.push_back(static_cast<std::uint32_t>(g));
        }
        const auto rows = sim::gas_sweep(train, gas_values, task);
        std::vector<sim::SimResult> results;
        for (const auto& row : rows) {
            results.push_back(row.result);
        }
        sim::write_summary_csv(out, results);
        return kExitOk;
    }

    const auto r = sim::simulate(train, task);
    if (f.events) {
        sim::write_events_csv(out, r.events);
    } else {
        sim::write_summary_csv(out, std::span(&r, 1));
    }
    return kExitOk;
}

// estimate ---------------------------------------------------------------------

struct EstimateFlags {
    std::string params;
    std::string bytes;
    std::uint64_t bytes_per_param = perf::kAdamMixedPrecisionBytesPerParam;
    double tfb = -1.0;
    double tf = 0.0;
    double tb = 0.0;
    std::uint32_t gas = 1;
    std::uint64_t n = 1;
    std::uint64_t m = 1;
    double t = 0.0;
};

std::uint64_t checkpoint_bytes_from(const EstimateFlags& f) {
    if (f.params.empty() == f.bytes.empty()) {
        usage("give exactly one of --params or --bytes");
    }
    return f.params.empty() ? parse_size(f.bytes)
                            : perf::estimate_checkpoint_bytes(parse_count(f.params), f.bytes_per_param);
}

int cmd_estimate_size(const EstimateFlags& f, std::ostream& out) {
    const auto bytes = checkpoint_bytes_from(f);
    out << "checkpoint_bytes,checkpoint_gib\n"
        << bytes << ',' << std::setprecision(6) << static_cast<double>(bytes) / static_cast<double>(1ull << 30)
        << '\n';
    return kExitOk;
}

int cmd_estimate_bandwidth(const EstimateFlags& f, std::ostream& out) {
    const auto bytes = checkpoint_bytes_from(f);
    perf::IterationTiming timing;
    if (f.tfb >= 0.0) {
        if (f.tf != 0.0 || f.tb != 0.0) {
            usage("--tfb cannot be combined with --tf/--tb");
        }
        timing.t_forward = f.tfb;
    } else {
        timing.t_forward = f.tf;
        timing.t_backward = f.tb;
    }
    timing.gas = f.gas;
    const auto bw = perf::required_bandwidth(bytes, timing);
    out << "checkpoint_bytes,compute_seconds,gas,required_bps\n"
        << bytes << ',' << std::setprecision(12) << timing.t_forward + timing.t_backward << ',' << timing.gas << ','
        << bw << '\n';
    return kExitOk;
}

int cmd_estimate_recovery(const EstimateFlags& f, std::ostream& out) {
    const auto overhead = perf::recovery_overhead({f.n, f.m, f.t});
    out << "interval_n,gpu_count_m,iter_time_s,recovery_gpu_seconds\n"
        << f.n << ',' << f.m << ',' << std::setprecision(12) << f.t << ',' << overhead << '\n';
    return kExitOk;
}

int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const Error& e) {
        err << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::bad_alloc&) {
        err << "error: out of memory\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitIo;
    }
}

}  // namespace

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Sizing:
        case ErrorKind::Domain:
        case ErrorKind::Config:
        case ErrorKind::Plan:
            return kExitUsage;
        case ErrorKind::Corruption:
        case ErrorKind::Format:
        case ErrorKind::Manifest:
            return kExitVerify;
        case ErrorKind::Load:
        case ErrorKind::Io:
        case ErrorKind::Setup:
            return kExitIo;
    }
    return kExitIo;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"fastckpt: staged checkpoint writer, shard planner and checkpoint schedule simulator"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string scratch = ".";
    std::uint64_t seed = 1;
    app.add_option("--scratch", scratch, "Directory for every file written (FASTCKPT_SCRATCH overrides)")
        ->capture_default_str();
    app.add_option("--seed", seed, "Seed for generated data")->capture_default_str();

    BenchFlags bench_flags;
    auto* bench = app.add_subcommand("bench", "Sweep checkpoint size x IO buffer x write mode; CSV out");
    bench->add_option("--sizes", bench_flags.sizes, "Checkpoint sizes, e.g. 16MiB,512MiB")->capture_default_str();
    bench->add_option("--buffers", bench_flags.buffers, "IO buffer sizes, ranges double: 2MiB..128MiB")
        ->capture_default_str();
    bench->add_option("--modes", bench_flags.modes, "single,double")->capture_default_str();
    bench->add_option("--repeats", bench_flags.repeats, "Runs per configuration")->capture_default_str();
    bench->add_option("--alignment", bench_flags.alignment, "Direct I/O alignment")->capture_default_str();
    bench->add_option("--queue-depth", bench_flags.queue_depth, "Concurrent direct requests per flush")
        ->capture_default_str();
    bench->add_flag("--no-direct", bench_flags.buffered, "Write through the page cache");

    SaveFlags save_flags;
    auto* save = app.add_subcommand("save", "Write a sharded checkpoint and its manifest");
    save->add_option("--spec", save_flags.spec, "Tensor spec JSON (names, dtypes, shapes, fill)");
    save->add_option("--synthetic", save_flags.synthetic, "Generate a model with this payload size, e.g. 1GiB");
    save->add_option("--tensors", save_flags.tensors, "Tensor count for --synthetic")->capture_default_str();
    save->add_option("--stem", save_flags.stem, "Output file stem")->capture_default_str();
    save_flags.topo.add_to(save);
    save_flags.engine.add_to(save);

    LoadFlags load_flags;
    auto* load = app.add_subcommand("load", "Reassemble a sharded checkpoint and check it");
    load->add_option("--manifest", load_flags.manifest, "Manifest path (relative paths resolve in scratch)");
    load->add_option("--stem", load_flags.stem, "Stem used when --manifest is absent")->capture_default_str();
    load->add_option("--readers", load_flags.readers, "Concurrent shard readers")->capture_default_str();
    load->add_flag("--verify", load_flags.verify, "Compare tensors against the tensor spec");
    load->add_option("--spec", load_flags.spec, "Tensor spec for --verify (default: <stem>.spec.json)");

    std::string plan_bytes;
    TopologyFlags plan_topo;
    auto* plan_cmd = app.add_subcommand("plan", "Print the writer byte ranges as JSON");
    plan_cmd->add_option("--bytes", plan_bytes, "Serialized checkpoint size")->required();
    plan_topo.add_to(plan_cmd);

    SimulateFlags sim_flags;
    auto* simulate = app.add_subcommand("simulate", "Checkpoint schedule around the training loop");
    simulate->add_option("--mode", sim_flags.mode, "sequential | pipelined | none")->capture_default_str();
    simulate->add_option("--gas", sim_flags.gas, "Gradient accumulation steps")->capture_default_str();
    simulate->add_option("--tf", sim_flags.tf, "Forward seconds per micro-step")->capture_default_str();
    simulate->add_option("--tb", sim_flags.tb, "Backward seconds per micro-step")->capture_default_str();
    simulate->add_option("--to", sim_flags.to, "Optimizer seconds")->capture_default_str();
    simulate->add_option("--iterations", sim_flags.iterations, "Training iterations")->capture_default_str();
    simulate->add_option("--bytes", sim_flags.bytes, "Checkpoint size")->capture_default_str();
    simulate->add_option("--bandwidth", sim_flags.bandwidth, "Synthetic write bandwidth, bytes/s");
    simulate->add_option("--gas-sweep", sim_flags.gas_sweep, "GAS values, e.g. 1..512");
    simulate->add_flag("--events", sim_flags.events, "Print the event log instead of the summary");
    simulate->add_flag("--live", sim_flags.live, "Real trainer/persister threads writing to scratch");
    simulate->add_option("--writer-count", sim_flags.writer_count, "Live mode: parallel shard writers")
        ->capture_default_str();
    simulate->add_option("--tensors", sim_flags.tensors, "Live mode: tensor count")->capture_default_str();
    sim_flags.engine.add_to(simulate, "--io-mode");

    EstimateFlags est;
    auto* estimate = app.add_subcommand("estimate", "Analytical models");
    estimate->require_subcommand(1);
    auto* est_size = estimate->add_subcommand("size", "Checkpoint bytes from a parameter count");
    auto* est_bw = estimate->add_subcommand("bandwidth", "Write bandwidth that hides a checkpoint");
    auto* est_rec = estimate->add_subcommand("recovery", "Expected GPU-seconds lost per failure");
    for (auto* cmd : {est_size, est_bw}) {
        cmd->add_option("--params", est.params, "Parameter count, e.g. 1.3e9");
        cmd->add_option("--bytes", est.bytes, "Checkpoint size instead of --params");
        cmd->add_option("--bytes-per-param", est.bytes_per_param, "Bytes per parameter")->capture_default_str();
    }
    est_bw->add_option("--tfb", est.tfb, "Forward + backward seconds");
    est_bw->add_option("--tf", est.tf, "Forward seconds");
    est_bw->add_option("--tb", est.tb, "Backward seconds");
    est_bw->add_option("--gas", est.gas, "Gradient accumulation steps")->capture_default_str();
    est_rec->add_option("--n", est.n, "Checkpoint interval in iterations")->required();
    est_rec->add_option("--m", est.m, "GPU count")->required();
    est_rec->add_option("--t", est.t, "Iteration seconds")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    return guarded(err, [&]() -> int {
        if (bench->parsed()) return cmd_bench(bench_flags, scratch, seed, out);
        if (save->parsed()) return cmd_save(save_flags, scratch, seed, out);
        if (load->parsed()) return cmd_load(load_flags, scratch, out, err);
        if (plan_cmd->parsed()) return cmd_plan(plan_bytes, plan_topo, out);
        if (simulate->parsed()) return cmd_simulate(sim_flags, scratch, seed, out);
        if (est_size->parsed()) return cmd_estimate_size(est, out);
        if (est_bw->parsed()) return cmd_estimate_bandwidth(est, out);
        if (est_rec->parsed()) return cmd_estimate_recovery(est, out);
        usage("no subcommand");
    });
}

}  // namespace fastckpt::cli
