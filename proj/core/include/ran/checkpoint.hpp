#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ran/errors.hpp"
#include "ran/param_store.hpp"

// RANCKPT1 checkpoint container. Byte layout is documented in
// docs/formats.md; everything is little-endian, values are 32-bit reals,
// entries appear in sorted-name order, and Adam moments live in a parallel
// section behind the "ADAMMOM1" marker.

namespace ran {

namespace detail {

inline void put_bytes(std::string& out, const void* p, size_t n) {
    out.append(static_cast<const char*>(p), n);
}

inline void put_u32(std::string& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}

inline void put_u64(std::string& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 8);
}

inline void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class ByteReader {
public:
    ByteReader(const std::string& path, std::string blob) : path_(path), blob_(std::move(blob)) {}

    void need(size_t n) const {
        if (pos_ + n > blob_.size()) throw FormatError(path_ + ": truncated (need " +
                                                       std::to_string(n) + " bytes at offset " +
                                                       std::to_string(pos_) + ")");
    }
    void bytes(void* p, size_t n) {
        need(n);
        std::memcpy(p, blob_.data() + pos_, n);
        pos_ += n;
    }
    uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
        return v;
    }
    uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s = blob_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == blob_.size(); }

private:
    std::string path_;
    std::string blob_;
    size_t pos_ = 0;
};

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError(path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return blob;
}

inline void write_file_bytes(const std::string& path, const std::string& blob) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw Error("write failed: " + path);
}

} // namespace detail

inline constexpr char kCheckpointMagic[9] = "RANCKPT1";
inline constexpr char kMomentsMagic[9] = "ADAMMOM1";

template <typename T>
void save_checkpoint(const ParamStoreT<T>& store, const std::string& path) {
    std::string out;
    detail::put_bytes(out, kCheckpointMagic, 8);
    detail::put_u64(out, static_cast<uint64_t>(store.entries.size()));
    detail::put_u64(out, store.rng_seed);
    for (const auto& [name, p] : store.entries) {
        detail::put_u32(out, static_cast<uint32_t>(name.size()));
        detail::put_bytes(out, name.data(), name.size());
        detail::put_u32(out, static_cast<uint32_t>(p.value.shape.rank));
        for (int i = 0; i < p.value.shape.rank; ++i)
            detail::put_u64(out, static_cast<uint64_t>(p.value.shape[i]));
        for (T v : p.value.data) detail::put_f32(out, static_cast<float>(v));
    }
    detail::put_bytes(out, kMomentsMagic, 8);
    for (const auto& [name, p] : store.entries) {
        detail::put_u64(out, static_cast<uint64_t>(p.step));
        for (T v : p.m.data) detail::put_f32(out, static_cast<float>(v));
        for (T v : p.v.data) detail::put_f32(out, static_cast<float>(v));
    }
    detail::write_file_bytes(path, out);
}

template <typename T>
ParamStoreT<T> load_checkpoint(const std::string& path) {
    detail::ByteReader r(path, detail::read_file_bytes(path));
    if (r.str(8) != kCheckpointMagic) throw FormatError(path + ": bad checkpoint magic");
    const uint64_t count = r.u64();
    ParamStoreT<T> store;
    store.rng_seed = r.u64();
    std::vector<std::string> order;
    for (uint64_t e = 0; e < count; ++e) {
        const uint32_t name_len = r.u32();
        std::string name = r.str(name_len);
        const uint32_t rank = r.u32();
        if (rank > 4) throw FormatError(path + ": parameter '" + name + "' rank > 4");
        Shape shape;
        shape.rank = static_cast<int>(rank);
        for (uint32_t i = 0; i < rank; ++i) shape.extent[i] = static_cast<int>(r.u64());
        TensorT<T>& t = store.create(name, shape);
        for (auto& v : t.data) v = static_cast<T>(r.f32());
        order.push_back(std::move(name));
    }
    if (r.str(8) != kMomentsMagic) throw FormatError(path + ": bad moments marker");
    for (const std::string& name : order) {
        Param<T>& p = store.param(name);
        p.step = static_cast<int64_t>(r.u64());
        for (auto& v : p.m.data) v = static_cast<T>(r.f32());
        for (auto& v : p.v.data) v = static_cast<T>(r.f32());
    }
    if (!r.at_end()) throw FormatError(path + ": trailing bytes after checkpoint");
    return store;
}

} // namespace ran
