// Copyright 2026 The fastckpt Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastckpt/ckpt_format.hpp"

#include <fcntl.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fastckpt/crc32.hpp"
#include "fastckpt/error.hpp"
#include "posix_file.hpp"

namespace fastckpt::format {

namespace {

constexpr std::string_view kManifestSuffix = ".manifest.json";

[[noreturn]] void format_error(const std::string& what) {
    throw Error(ErrorKind::Format, what);
}

template <typename T>
void put_le(std::byte*& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        *out++ = static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
    }
}

// Bounds-checked little-endian reader over the stream.
class Reader {
public:
    explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* field) {
        auto raw = take(sizeof(T), field);
        std::uint64_t value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
        }
        return static_cast<T>(value);
    }

    std::span<const std::byte> take(std::uint64_t n, const char* field) {
        if (n > bytes_.size() - pos_) {
            format_error(std::string("truncated stream reading ") + field + " at offset " + std::to_string(pos_));
        }
        auto out = bytes_.subspan(pos_, static_cast<std::size_t>(n));
        pos_ += static_cast<std::size_t>(n);
        return out;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::F16: return 2;
        case DType::F32: return 4;
        case DType::F64: return 8;
        case DType::I8: return 1;
        case DType::I32: return 4;
        case DType::I64: return 8;
    }
    format_error("unknown dtype code " + std::to_string(static_cast<int>(dtype)));
}

std::string_view dtype_name(DType dtype) {
    switch (dtype) {
        case DType::F16: return "f16";
        case DType::F32: return "f32";
        case DType::F64: return "f64";
        case DType::I8: return "i8";
        case DType::I32: return "i32";
        case DType::I64: return "i64";
    }
    return "unknown";
}

std::optional<DType> parse_dtype(std::string_view name) {
    for (auto d : {DType::F16, DType::F32, DType::F64, DType::I8, DType::I32, DType::I64}) {
        if (dtype_name(d) == name) {
            return d;
        }
    }
    return std::nullopt;
}

std::uint64_t TensorRecord::expected_payload_bytes() const {
    std::uint64_t n = dtype_size(dtype);
    for (auto dim : shape) {
        if (__builtin_mul_overflow(n, dim, &n)) {
            format_error("tensor '" + name + "' element count overflows");
        }
    }
    return n;
}

void TensorRecord::validate() const {
    if (name.empty()) {
        format_error("tensor name must be non-empty");
    }
    if (name.size() > kMaxNameBytes) {
        format_error("tensor name longer than 65535 bytes");
    }
    if (shape.size() > kMaxDims) {
        format_error("tensor '" + name + "' has more than 255 dims");
    }
    const auto expected = expected_payload_bytes();
    if (payload.size() != expected) {
        format_error("tensor '" + name + "' payload is " + std::to_string(payload.size()) + " bytes, shape needs " +
                     std::to_string(expected));
    }
}

std::uint64_t record_bytes(const TensorRecord& record) {
    return 2 + record.name.size() + 1 + 1 + 8 * record.shape.size() + 8 + record.payload.size();
}

std::uint64_t serialized_size(std::span<const TensorRecord> records) {
    std::uint64_t total = kHeaderBytes + kFooterBytes;
    for (const auto& r : records) {
        total += record_bytes(r);
    }
    return total;
}

SerializedStream serialize(std::span<const TensorRecord> records) {
    for (const auto& r : records) {
        r.validate();
    }
    SerializedStream stream;
    stream.bytes.resize(serialized_size(records));
    stream.record_offsets.reserve(records.size());

    std::byte* const base = stream.bytes.data();
    std::byte* out = base;
    std::memcpy(out, kMagic.data(), kMagic.size());
    out += kMagic.size();
    put_le<std::uint32_t>(out, kFormatVersion);
    put_le<std::uint64_t>(out, records.size());

    for (const auto& r : records) {
        const auto start = static_cast<std::uint64_t>(out - base);
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(r.name.size()));
        std::memcpy(out, r.name.data(), r.name.size());
        out += r.name.size();
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.dtype));
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(r.shape.size()));
        for (auto dim : r.shape) {
            put_le<std::uint64_t>(out, dim);
        }
        put_le<std::uint64_t>(out, r.payload.size());
        if (!r.payload.empty()) {
            std::memcpy(out, r.payload.data(), r.payload.size());
            out += r.payload.size();
        }
        stream.record_offsets.push_back({start, static_cast<std::uint64_t>(out - base) - start});
    }

    const auto body = std::span<const std::byte>(base, static_cast<std::size_t>(out - base));
    put_le<std::uint32_t>(out, crc32(body));
    return stream;
}

std::vector<TensorRecord> deserialize(std::span<const std::byte> bytes) {
    if (bytes.size() < kHeaderBytes + kFooterBytes) {
        format_error("stream of " + std::to_string(bytes.size()) + " bytes is shorter than header + footer");
    }
    const auto body = bytes.first(bytes.size() - kFooterBytes);
    Reader footer(bytes.last(kFooterBytes));
    const auto stored_crc = footer.get<std::uint32_t>("crc32");
    if (crc32(body) != stored_crc) {
        format_error("stream checksum mismatch");
    }

    Reader in(body);
    auto magic = in.take(kMagic.size(), "magic");
    if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) {
        format_error("bad magic");
    }
    const auto version = in.get<std::uint32_t>("version");
    if (version != kFormatVersion) {
        format_error("unsupported format version " + std::to_string(version));
    }
    const auto count = in.get<std::uint64_t>("record_count");
    // Smallest legal record: 1-byte name, 0 dims, empty payload.
    if (count > in.remaining() / 14) {
        format_error("record count " + std::to_string(count) + " exceeds stream length");
    }

    std::vector<TensorRecord> records;
    records.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        TensorRecord r;
        const auto name_len = in.get<std::uint16_t>("name_len");
        auto name = in.take(name_len, "name");
        r.name.assign(reinterpret_cast<const char*>(name.data()), name.size());
        const auto dtype_code = in.get<std::uint8_t>("dtype");
        if (dtype_code > static_cast<std::uint8_t>(DType::I64)) {
            format_error("record " + std::to_string(i) + " has unknown dtype " + std::to_string(dtype_code));
        }
        r.dtype = static_cast<DType>(dtype_code);
        const auto ndim = in.get<std::uint8_t>("ndim");
        r.shape.resize(ndim);
        for (auto& dim : r.shape) {
            dim = in.get<std::uint64_t>("dim");
        }
        const auto payload_len = in.get<std::uint64_t>("payload_len");
        auto payload = in.take(payload_len, "payload");
        r.payload.assign(payload.begin(), payload.end());
        r.validate();
        records.push_back(std::move(r));
    }
    if (in.remaining() != 0) {
        format_error(std::to_string(in.remaining()) + " trailing bytes after last record");
    }
    return records;
}

bool is_valid_alignment(std::uint64_t alignment) {
    return alignment >= 512 && (alignment & (alignment - 1)) == 0;
}

void require_valid_alignment(std::uint64_t alignment) {
    if (!is_valid_alignment(alignment)) {
        throw Error(ErrorKind::Config,
                    "alignment must be a power of two >= 512, got " + std::to_string(alignment));
    }
}

AlignedSplit split_aligned(std::uint64_t total, std::uint64_t alignment) {
    require_valid_alignment(alignment);
    const std::uint64_t prefix = total & ~(alignment - 1);
    return {prefix, total - prefix, alignment};
}

void ShardManifest::validate() const {
    auto fail = [](std::size_t i, const std::string& what) {
        throw Error(ErrorKind::Manifest, "manifest shard " + std::to_string(i) + ": " + what);
    };
    if (format_version != 1) {
        throw Error(ErrorKind::Manifest, "unsupported manifest version " + std::to_string(format_version));
    }
    std::uint64_t expected = 0;
    for (std::size_t i = 0; i < shards.size(); ++i) {
        const auto& s = shards[i];
        if (s.offset < expected) {
            fail(i, "overlaps previous shard at offset " + std::to_string(s.offset));
        }
        if (s.offset > expected) {
            fail(i, "gap before offset " + std::to_string(s.offset) + " (expected " + std::to_string(expected) + ")");
        }
        if (__builtin_add_overflow(expected, s.length, &expected)) {
            fail(i, "length overflows");
        }
    }
    if (expected != total_bytes) {
        throw Error(ErrorKind::Manifest, "shards cover " + std::to_string(expected) + " bytes, manifest total is " +
                                             std::to_string(total_bytes));
    }
}

std::string ShardManifest::to_json() const {
    nlohmann::ordered_json j;
    j["version"] = format_version;
    j["total_bytes"] = total_bytes;
    j["alignment"] = alignment;
    j["shards"] = nlohmann::ordered_json::array();
    for (const auto& s : shards) {
        j["shards"].push_back({{"writer_id", s.writer_id}, {"offset", s.offset}, {"length", s.length}, {"crc32", s.crc32}});
    }
    return j.dump(2) + "\n";
}

ShardManifest ShardManifest::from_json(std::string_view text) {
    ShardManifest m;
    try {
        const auto j = nlohmann::json::parse(text);
        m.format_version = j.at("version").get<std::uint32_t>();
        m.total_bytes = j.at("total_bytes").get<std::uint64_t>();
        m.alignment = j.at("alignment").get<std::uint64_t>();
        for (const auto& s : j.at("shards")) {
            m.shards.push_back({s.at("writer_id").get<std::uint32_t>(), s.at("offset").get<std::uint64_t>(),
                                s.at("length").get<std::uint64_t>(), s.at("crc32").get<std::uint32_t>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Manifest, std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void verify_shard(const ShardEntry& entry, std::span<const std::byte> bytes) {
    if (bytes.size() != entry.length) {
        throw CorruptionError(entry.writer_id, "shard of writer " + std::to_string(entry.writer_id) + " is " +
                                                   std::to_string(bytes.size()) + " bytes, manifest says " +
                                                   std::to_string(entry.length));
    }
    const auto actual = crc32(bytes);
    if (actual != entry.crc32) {
        throw CorruptionError(entry.writer_id, "checksum mismatch in shard of writer " +
                                                   std::to_string(entry.writer_id));
    }
}

SerializedStream assemble(std::span<const std::vector<std::byte>> shards, const ShardManifest& manifest) {
    manifest.validate();
    if (shards.size() != manifest.shards.size()) {
        throw Error(ErrorKind::Manifest, "got " + std::to_string(shards.size()) + " shards, manifest lists " +
                                             std::to_string(manifest.shards.size()));
    }
    for (std::size_t i = 0; i < shards.size(); ++i) {
        verify_shard(manifest.shards[i], shards[i]);
    }
    SerializedStream out;
    out.bytes.reserve(manifest.total_bytes);
    for (const auto& s : shards) {
        out.bytes.insert(out.bytes.end(), s.begin(), s.end());
    }
    return out;
}

std::string shard_file_name(std::string_view stem, std::size_t index, std::size_t count) {
    return std::string(stem) + ".shard-" + std::to_string(index) + "-of-" + std::to_string(count);
}

std::filesystem::path manifest_path(const std::filesystem::path& dir, std::string_view stem) {
    return dir / (std::string(stem) + std::string(kManifestSuffix));
}

std::string stem_from_manifest_path(const std::filesystem::path& path) {
    auto name = path.filename().string();
    if (name.size() > kManifestSuffix.size() && name.ends_with(kManifestSuffix)) {
        name.resize(name.size() - kManifestSuffix.size());
    }
    return name;
}

ShardManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::Load, "cannot open manifest " + path.string());
    }
    std::stringstream text;
    text << in.rdbuf();
    return ShardManifest::from_json(text.str());
}

void write_manifest(const std::filesystem::path& path, const ShardManifest& manifest) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << manifest.to_json();
        out.flush();
        if (!out) {
            throw IoError(0, "failed writing manifest " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError(0, "failed to publish manifest " + path.string() + ": " + ec.message());
    }
}

SerializedStream load_stream_parallel(const std::filesystem::path& manifest_file, unsigned reader_count) {
    const auto manifest = read_manifest(manifest_file);
    manifest.validate();
    const auto dir = manifest_file.parent_path();
    const auto stem = stem_from_manifest_path(manifest_file);
    const auto shard_count = manifest.shards.size();

    SerializedStream out;
    out.bytes.resize(manifest.total_bytes);

    // Each reader owns a disjoint set of shards and fills the matching byte
    // range of the output directly; that placement is the allgather.
    std::atomic<std::size_t> next{0};
    std::mutex error_mu;
    std::exception_ptr first_error;
    std::size_t first_error_shard = shard_count;

    auto read_one = [&](std::size_t i) {
        const auto& entry = manifest.shards[i];
        const auto path = dir / shard_file_name(stem, i, shard_count);
        detail::FileDescriptor fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
        if (!fd.valid()) {
            throw LoadError(i, "shard " + std::to_string(i) + " (" + path.string() + ") cannot be opened: " +
                                   detail::errno_message(errno));
        }
        auto dest = std::span<std::byte>(out.bytes).subspan(entry.offset, entry.length);
        const auto got = detail::pread_all(fd.get(), dest, 0);
        if (got < 0) {
            throw LoadError(i, "shard " + std::to_string(i) + " read failed: " +
                                   detail::errno_message(static_cast<int>(-got)));
        }
        if (static_cast<std::uint64_t>(got) != entry.length) {
            throw LoadError(i, "shard " + std::to_string(i) + " is truncated: " + std::to_string(got) + " of " +
                                   std::to_string(entry.length) + " bytes");
        }
        std::byte extra{};
        if (detail::pread_all(fd.get(), std::span<std::byte>(&extra, 1), entry.length) != 0) {
            throw LoadError(i, "shard " + std::to_string(i) + " is longer than its manifest entry");
        }
        verify_shard(entry, dest);
    };

    auto worker = [&] {
        for (std::size_t i = next++; i < shard_count; i = next++) {
            try {
                read_one(i);
            } catch (...) {
                std::lock_guard lock(error_mu);
                if (i < first_error_shard) {
                    first_error_shard = i;
                    first_error = std::current_exception();
                }
            }
        }
    };

    const unsigned readers = std::max(1u, std::min<unsigned>(reader_count, static_cast<unsigned>(shard_count)));
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < readers; ++t) {
            pool.emplace_back(worker);
        }
        worker();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    return out;
}

std::vector<TensorRecord> load_parallel(const std::filesystem::path& manifest_file, unsigned reader_count) {
    return deserialize(load_stream_parallel(manifest_file, reader_count).bytes);
}

}  // namespace fastckpt::format
