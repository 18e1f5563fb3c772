// SPDX-License-Identifier: Apache-2.0

#include "oopk/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace oopk {

namespace {

constexpr char kMagic[8] = {'O', 'O', 'P', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct CkptError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
void write_le(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& path) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw CkptError(path + ": truncated checkpoint");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

void write_str(std::ostream& out, const std::string& s) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in, const std::string& path) {
    const auto n = read_le<std::uint32_t>(in, path);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw CkptError(path + ": truncated string");
    return s;
}

void write_f64(std::ostream& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    write_le<std::uint64_t>(out, bits);
}

double read_f64(std::istream& in, const std::string& path) {
    const auto bits = read_le<std::uint64_t>(in, path);
    double d;
    std::memcpy(&d, &bits, sizeof(d));
    return d;
}

}  // namespace

const std::string& Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw UsageError("checkpoint: missing meta key '" + key + "'");
    return it->second;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CkptError("cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    write_le<std::uint32_t>(out, kVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
    for (const auto& [k, v] : ckpt.meta) {
        write_str(out, k);
        write_str(out, v);
    }
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        write_str(out, name);
        write_le<std::uint8_t>(out, 0);  // f64
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int e : t.shape) write_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
        for (double d : t.data) write_f64(out, d);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CkptError("cannot read " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw CkptError(path + ": bad checkpoint magic");
    const auto version = read_le<std::uint32_t>(in, path);
    if (version != kVersion)
        throw CkptError(path + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    const auto n_meta = read_le<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = read_str(in, path);
        ckpt.meta[k] = read_str(in, path);
    }
    const auto n_tens = read_le<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < n_tens; ++i) {
        std::string name = read_str(in, path);
        const auto dtype = read_le<std::uint8_t>(in, path);
        if (dtype != 0) throw CkptError(path + ": unsupported dtype tag");
        const auto rank = read_le<std::uint32_t>(in, path);
        std::vector<int> shape(rank);
        for (auto& e : shape) e = static_cast<int>(read_le<std::uint64_t>(in, path));
        Tensor t(shape);
        for (double& d : t.data) d = read_f64(in, path);
        ckpt.tensors.emplace(std::move(name), std::move(t));
    }
    return ckpt;
}

}  // namespace oopk
