// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic stand-in model state. A ModelSpec names each tensor's dtype,
// shape and fill rule; the payload bytes are a pure function of
// (seed, tensor index), so a saved checkpoint can be verified later without
// keeping the original in memory.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastckpt/ckpt_format.hpp"

namespace fastckpt::synth {

enum class Fill { Seeded, Zeros, Iota };

struct TensorSpec {
    std::string name;
    format::DType dtype = format::DType::F32;
    std::vector<std::uint64_t> shape;
    Fill fill = Fill::Seeded;

    std::uint64_t payload_bytes() const;
};

struct ModelSpec {
    std::uint64_t seed = 0;
    std::vector<TensorSpec> tensors;

    std::uint64_t payload_bytes() const;
    /// Exact serialized stream length for this model.
    std::uint64_t serialized_bytes() const;

    std::string to_json() const;
    /// {"seed": 7, "tensors": [{"name", "dtype", "shape", "fill"}]}; throws Error(Config).
    static ModelSpec from_json(std::string_view text);
};

/// `tensor_count` tensors of mixed dtypes and uneven sizes whose payloads sum
/// to exactly `payload_bytes`.
ModelSpec synthetic_model(std::uint64_t payload_bytes, std::uint32_t tensor_count, std::uint64_t seed);

void fill_payload(const TensorSpec& spec, std::size_t index, std::uint64_t seed, std::span<std::byte> out);

std::vector<format::TensorRecord> materialize(const ModelSpec& model);

/// Returns a description of the first difference, or nullopt if `records`
/// is exactly what materialize(model) would produce.
std::optional<std::string> verify(const ModelSpec& model, std::span<const format::TensorRecord> records);

}  // namespace fastckpt::synth
