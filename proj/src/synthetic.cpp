// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/synthetic.hpp"

#include <algorithm>
#include <cstring>

#include <json.hpp>

#include "fastckpt/error.hpp"

namespace fastckpt::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::string_view fill_name(Fill fill) {
    switch (fill) {
        case Fill::Seeded: return "seeded";
        case Fill::Zeros: return "zeros";
        case Fill::Iota: return "iota";
    }
    return "seeded";
}

Fill parse_fill(std::string_view name) {
    if (name == "seeded") return Fill::Seeded;
    if (name == "zeros") return Fill::Zeros;
    if (name == "iota") return Fill::Iota;
    throw Error(ErrorKind::Config, "unknown fill rule '" + std::string(name) + "'");
}

format::TensorRecord make_record(const TensorSpec& spec, std::size_t index, std::uint64_t seed) {
    format::TensorRecord r;
    r.name = spec.name;
    r.dtype = spec.dtype;
    r.shape = spec.shape;
    r.payload.resize(static_cast<std::size_t>(spec.payload_bytes()));
    fill_payload(spec, index, seed, r.payload);
    return r;
}

}  // namespace

std::uint64_t TensorSpec::payload_bytes() const {
    format::TensorRecord probe;
    probe.name = name;
    probe.dtype = dtype;
    probe.shape = shape;
    return probe.expected_payload_bytes();
}

std::uint64_t ModelSpec::payload_bytes() const {
    std::uint64_t total = 0;
    for (const auto& t : tensors) {
        total += t.payload_bytes();
    }
    return total;
}

std::uint64_t ModelSpec::serialized_bytes() const {
    std::uint64_t total = format::kHeaderBytes + format::kFooterBytes;
    for (const auto& t : tensors) {
        total += 2 + t.name.size() + 2 + 8 * t.shape.size() + 8 + t.payload_bytes();
    }
    return total;
}

std::string ModelSpec::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["tensors"] = nlohmann::ordered_json::array();
    for (const auto& t : tensors) {
        j["tensors"].push_back({{"name", t.name},
                                {"dtype", std::string(format::dtype_name(t.dtype))},
                                {"shape", t.shape},
                                {"fill", std::string(fill_name(t.fill))}});
    }
    return j.dump(2) + "\n";
}

ModelSpec ModelSpec::from_json(std::string_view text) {
    ModelSpec m;
    try {
        const auto j = nlohmann::json::parse(text);
        m.seed = j.value("seed", std::uint64_t{0});
        for (const auto& t : j.at("tensors")) {
            TensorSpec spec;
            spec.name = t.at("name").get<std::string>();
            const auto dtype = format::parse_dtype(t.at("dtype").get<std::string>());
            if (!dtype) {
                throw Error(ErrorKind::Config, "tensor '" + spec.name + "' has unknown dtype");
            }
            spec.dtype = *dtype;
            spec.shape = t.at("shape").get<std::vector<std::uint64_t>>();
            spec.fill = parse_fill(t.value("fill", std::string("seeded")));
            m.tensors.push_back(std::move(spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Config, std::string("malformed tensor spec: ") + e.what());
    }
    return m;
}

ModelSpec synthetic_model(std::uint64_t payload_bytes, std::uint32_t tensor_count, std::uint64_t seed) {
    if (tensor_count < 1) {
        throw Error(ErrorKind::Config, "synthetic model needs at least one tensor");
    }
    using format::DType;
    static constexpr DType kCycle[] = {DType::F16, DType::F32, DType::F32, DType::F16, DType::F64, DType::I32};

    ModelSpec model;
    model.seed = seed;
    std::uint64_t weight_sum = 0;
    for (std::uint32_t i = 0; i + 1 < tensor_count; ++i) {
        weight_sum += 1 + (i * 7) % 5;
    }
    // The last tensor is int8 and absorbs whatever the others leave over,
    // so the payload total is exact.
    const std::uint64_t budget = payload_bytes - payload_bytes / 8;
    std::uint64_t used = 0;
    for (std::uint32_t i = 0; i + 1 < tensor_count; ++i) {
        const auto dtype = kCycle[i % std::size(kCycle)];
        const auto share = static_cast<std::uint64_t>(static_cast<long double>(budget) * (1 + (i * 7) % 5) /
                                                      static_cast<long double>(weight_sum));
        const auto elems = share / format::dtype_size(dtype);
        TensorSpec t;
        t.name = "layers." + std::to_string(i) + (i % 2 == 0 ? ".weight" : ".exp_avg");
        t.dtype = dtype;
        t.shape = elems % 64 == 0 && elems > 0 ? std::vector<std::uint64_t>{elems / 64, 64}
                                               : std::vector<std::uint64_t>{elems};
        used += elems * format::dtype_size(dtype);
        model.tensors.push_back(std::move(t));
    }
    model.tensors.push_back({"optimizer.state", DType::I8, {payload_bytes - used}, Fill::Seeded});
    return model;
}

void fill_payload(const TensorSpec& spec, std::size_t index, std::uint64_t seed, std::span<std::byte> out) {
    switch (spec.fill) {
        case Fill::Zeros:
            std::fill(out.begin(), out.end(), std::byte{0});
            return;
        case Fill::Iota:
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = static_cast<std::byte>(i & 0xFF);
            }
            return;
        case Fill::Seeded: {
            const std::uint64_t key = splitmix64(seed ^ splitmix64(index + 1));
            std::size_t pos = 0;
            for (std::uint64_t word = 0; pos < out.size(); ++word) {
                const std::uint64_t v = splitmix64(key + word);
                const std::size_t n = std::min<std::size_t>(8, out.size() - pos);
                std::memcpy(out.data() + pos, &v, n);
                pos += n;
            }
            return;
        }
    }
}

std::vector<format::TensorRecord> materialize(const ModelSpec& model) {
    std::vector<format::TensorRecord> records;
    records.reserve(model.tensors.size());
    for (std::size_t i = 0; i < model.tensors.size(); ++i) {
        records.push_back(make_record(model.tensors[i], i, model.seed));
    }
    return records;
}

std::optional<std::string> verify(const ModelSpec& model, std::span<const format::TensorRecord> records) {
    if (records.size() != model.tensors.size()) {
        return "expected " + std::to_string(model.tensors.size()) + " tensors, found " +
               std::to_string(records.size());
    }
    std::vector<std::byte> expected;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& spec = model.tensors[i];
        const auto& got = records[i];
        if (got.name != spec.name || got.dtype != spec.dtype || got.shape != spec.shape) {
            return "tensor " + std::to_string(i) + " ('" + got.name + "') metadata differs from spec '" + spec.name +
                   "'";
        }
        expected.resize(static_cast<std::size_t>(spec.payload_bytes()));
        fill_payload(spec, i, model.seed, expected);
        if (got.payload != expected) {
            const auto mismatch = std::mismatch(got.payload.begin(), got.payload.end(), expected.begin());
            return "tensor '" + spec.name + "' payload differs at byte " +
                   std::to_string(mismatch.first - got.payload.begin());
        }
    }
    return std::nullopt;
}

}  // namespace fastckpt::synth
