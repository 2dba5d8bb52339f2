#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "catprune/errors.hpp"
#include "catprune/model.hpp"

namespace catprune {

// Snapshot container, all multi-byte fields little-endian:
//   magic "CATM" | u32 version=1 | u64 config_hash | u32 epoch | u32 tensor_count
//   per tensor: u32 name_len | name bytes | u32 rank | u64 dim[rank] | f64 data[prod(dims)]
// Tensors appear in the fixed order below; doubles are IEEE-754 bit patterns.
inline constexpr std::uint32_t kSnapshotVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b, 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw UsageError("snapshot file " + path + ": truncated");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline std::uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw UsageError("snapshot file " + path + ": truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline double get_f64(std::istream& is, const std::string& path) {
    return std::bit_cast<double>(get_u64(is, path));
}

struct TensorSpec {
    const char* name;
    std::uint32_t rank;
};

inline constexpr TensorSpec kTensorOrder[6] = {
    {"src_embed", 2}, {"tgt_embed", 2}, {"hidden_w", 2},
    {"hidden_b", 1},  {"out_w", 2},     {"out_b", 1},
};

} // namespace detail

inline void save_snapshot(const ModelSnapshot& snap, const std::string& path) {
    if (!snap.all_finite()) throw Error("refusing to save snapshot with non-finite parameters");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");

    os.write("CATM", 4);
    detail::put_u32(os, kSnapshotVersion);
    detail::put_u64(os, snap.config_hash);
    detail::put_u32(os, static_cast<std::uint32_t>(snap.epoch));
    detail::put_u32(os, 6);

    const auto& cfg = snap.config;
    const auto tensors = snap.tensors();
    const std::uint64_t dims[6][2] = {
        {static_cast<std::uint64_t>(cfg.src_vocab_size), static_cast<std::uint64_t>(cfg.embed_dim)},
        {static_cast<std::uint64_t>(cfg.tgt_vocab_size), static_cast<std::uint64_t>(cfg.embed_dim)},
        {static_cast<std::uint64_t>(cfg.hidden_dim), static_cast<std::uint64_t>(cfg.input_dim())},
        {static_cast<std::uint64_t>(cfg.hidden_dim), 0},
        {static_cast<std::uint64_t>(cfg.tgt_vocab_size), static_cast<std::uint64_t>(cfg.hidden_dim)},
        {static_cast<std::uint64_t>(cfg.tgt_vocab_size), 0},
    };
    for (int i = 0; i < 6; ++i) {
        const auto& spec = detail::kTensorOrder[i];
        const std::string name = spec.name;
        detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::put_u32(os, spec.rank);
        for (std::uint32_t d = 0; d < spec.rank; ++d) detail::put_u64(os, dims[i][d]);
        for (const double v : *tensors[static_cast<std::size_t>(i)]) detail::put_f64(os, v);
    }
    os.flush();
    if (!os) throw Error("write failed for " + path);
}

inline ModelSnapshot load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);

    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "CATM")
        throw UsageError("snapshot file " + path + ": bad magic");
    const std::uint32_t version = detail::get_u32(is, path);
    if (version != kSnapshotVersion)
        throw UsageError("snapshot file " + path + ": unsupported version " +
                         std::to_string(version));
    const std::uint64_t config_hash = detail::get_u64(is, path);
    const std::uint32_t epoch = detail::get_u32(is, path);
    const std::uint32_t count = detail::get_u32(is, path);
    if (count != 6)
        throw UsageError("snapshot file " + path + ": expected 6 tensors, found " +
                         std::to_string(count));

    std::vector<std::vector<std::uint64_t>> shapes;
    std::vector<std::vector<double>> data;
    for (int i = 0; i < 6; ++i) {
        const std::uint32_t name_len = detail::get_u32(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw UsageError("snapshot file " + path + ": truncated");
        const auto& spec = detail::kTensorOrder[i];
        if (name != spec.name)
            throw UsageError("snapshot file " + path + ": expected tensor " +
                             std::string(spec.name) + ", found " + name);
        const std::uint32_t rank = detail::get_u32(is, path);
        if (rank != spec.rank)
            throw UsageError("snapshot file " + path + ": tensor " + name + " has rank " +
                             std::to_string(rank));
        std::vector<std::uint64_t> dims(rank);
        std::uint64_t total = 1;
        for (auto& d : dims) {
            d = detail::get_u64(is, path);
            if (d == 0 || d > (1ull << 32))
                throw UsageError("snapshot file " + path + ": tensor " + name +
                                 " has invalid dimension");
            total *= d;
        }
        std::vector<double> values(total);
        for (auto& v : values) {
            v = detail::get_f64(is, path);
            if (!std::isfinite(v))
                throw UsageError("snapshot file " + path + ": tensor " + name +
                                 " holds a non-finite value");
        }
        shapes.push_back(std::move(dims));
        data.push_back(std::move(values));
    }
    char extra;
    if (is.read(&extra, 1))
        throw UsageError("snapshot file " + path + ": trailing bytes after last tensor");

    const std::uint64_t v_s = shapes[0][0], e = shapes[0][1];
    const std::uint64_t v_t = shapes[1][0];
    const std::uint64_t h = shapes[2][0], f = shapes[2][1];
    if (shapes[1][1] != e || shapes[3][0] != h || shapes[4][0] != v_t || shapes[4][1] != h ||
        shapes[5][0] != v_t || f % e != 0 || f / e < 2)
        throw UsageError("snapshot file " + path + ": inconsistent tensor shapes");

    ModelConfig cfg;
    cfg.embed_dim = static_cast<std::int64_t>(e);
    cfg.hidden_dim = static_cast<std::int64_t>(h);
    cfg.context_k = static_cast<std::int64_t>(f / e) - 1;
    cfg.src_vocab_size = static_cast<std::int64_t>(v_s);
    cfg.tgt_vocab_size = static_cast<std::int64_t>(v_t);

    ModelSnapshot snap;
    snap.epoch = static_cast<std::int64_t>(epoch);
    snap.config = cfg;
    snap.config_hash = config_hash;
    snap.src_embed = std::move(data[0]);
    snap.tgt_embed = std::move(data[1]);
    snap.hidden_w = std::move(data[2]);
    snap.hidden_b = std::move(data[3]);
    snap.out_w = std::move(data[4]);
    snap.out_b = std::move(data[5]);
    return snap;
}

} // namespace catprune
