#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/network.hpp"

namespace msnn {

// Checkpoint file: magic "MSNN", version byte, spec fingerprint, training
// metadata, then length-prefixed little-endian float32 blobs per layer
// (weights, biases, BN affine and running statistics). Bit-exact across
// platforms by construction.
namespace ckpt {

constexpr char kMagic[4] = {'M', 'S', 'N', 'N'};
constexpr std::uint8_t kVersion = 1;

inline void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

struct Reader {
    const unsigned char* p;
    std::size_t len;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > len) throw io_error("corrupt checkpoint: truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return p[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

} // namespace ckpt

template <typename T>
std::vector<std::vector<T>*> checkpoint_blobs(typename Network<T>::Layer& layer) {
    return std::visit(
        [](auto& l) -> std::vector<std::vector<T>*> {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv2d<T>> || std::is_same_v<L, FullyConnected<T>>)
                return {&l.w, &l.b};
            else if constexpr (std::is_same_v<L, BatchNorm<T>>)
                return {&l.gamma, &l.beta, &l.running_mean, &l.running_var};
            else
                return {};
        },
        layer);
}

template <typename T>
void save_checkpoint(Network<T>& net, const std::string& path) {
    std::string out;
    out.append(ckpt::kMagic, 4);
    ckpt::put_u8(out, ckpt::kVersion);
    ckpt::put_u64(out, net.spec.fingerprint());
    ckpt::put_u32(out, static_cast<std::uint32_t>(net.spec.input_extent));
    ckpt::put_u32(out, static_cast<std::uint32_t>(net.spec.input_channels));
    ckpt::put_u64(out, net.init_seed);
    ckpt::put_u32(out, net.epochs_completed);
    ckpt::put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        ckpt::put_u8(out, static_cast<std::uint8_t>(net.spec.layers[i].kind));
        auto blobs = checkpoint_blobs<T>(net.layers[i]);
        ckpt::put_u8(out, static_cast<std::uint8_t>(blobs.size()));
        for (auto* blob : blobs) {
            ckpt::put_u64(out, blob->size());
            for (T v : *blob) ckpt::put_f32(out, static_cast<float>(v));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open checkpoint for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error("short write to checkpoint: " + path);
}

template <typename T>
Network<T> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    ckpt::Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()};

    r.need(4);
    if (std::memcmp(bytes.data(), ckpt::kMagic, 4) != 0)
        throw io_error("corrupt checkpoint: bad magic in " + path);
    r.pos = 4;
    if (r.u8() != ckpt::kVersion) throw io_error("unsupported checkpoint version in " + path);
    std::uint64_t fingerprint = r.u64();
    int extent = static_cast<int>(r.u32());
    int channels = static_cast<int>(r.u32());
    std::uint64_t seed = r.u64();
    std::uint32_t epochs = r.u32();
    std::uint32_t layer_count = r.u32();

    NetworkSpec spec = build_msnn(extent, channels);
    if (spec.fingerprint() != fingerprint)
        throw io_error("checkpoint fingerprint does not match the MSNN spec for extent " +
                       std::to_string(extent));
    if (layer_count != spec.layers.size())
        throw io_error("corrupt checkpoint: layer count mismatch");

    Network<T> net = Network<T>::init(spec, seed);
    net.epochs_completed = epochs;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (r.u8() != static_cast<std::uint8_t>(spec.layers[i].kind))
            throw io_error("corrupt checkpoint: layer kind mismatch at layer " +
                           std::to_string(i));
        auto blobs = checkpoint_blobs<T>(net.layers[i]);
        if (r.u8() != blobs.size())
            throw io_error("corrupt checkpoint: blob count mismatch at layer " +
                           std::to_string(i));
        for (auto* blob : blobs) {
            std::uint64_t count = r.u64();
            if (count != blob->size())
                throw io_error("corrupt checkpoint: blob size mismatch at layer " +
                               std::to_string(i));
            for (auto& v : *blob) v = static_cast<T>(r.f32());
        }
    }
    if (r.pos != bytes.size()) throw io_error("corrupt checkpoint: trailing bytes in " + path);
    return net;
}

// Load against a caller-supplied spec; rejects checkpoints trained on a
// different extent or family.
template <typename T>
Network<T> load_checkpoint(const std::string& path, const NetworkSpec& expect) {
    Network<T> net = load_checkpoint<T>(path);
    if (net.spec.fingerprint() != expect.fingerprint())
        throw io_error("checkpoint spec fingerprint mismatch: file was built for extent " +
                       std::to_string(net.spec.input_extent) + ", expected extent " +
                       std::to_string(expect.input_extent));
    return net;
}

} // namespace msnn
