#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "msnn/checksum.hpp"
#include "msnn/error.hpp"
#include "msnn/layers.hpp"
#include "msnn/rng.hpp"
#include "msnn/tensor.hpp"

namespace msnn {

enum class LayerKind : std::uint8_t {
    Conv = 0,
    BatchNorm = 1,
    Relu = 2,
    MaxPool = 3,
    Gap = 4,
    Fc = 5,
    Softmax = 6,
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "Conv";
        case LayerKind::BatchNorm: return "BN";
        case LayerKind::Relu: return "ReLU";
        case LayerKind::MaxPool: return "MaxPool";
        case LayerKind::Gap: return "GAP";
        case LayerKind::Fc: return "FC";
        case LayerKind::Softmax: return "SoftMax";
    }
    return "?";
}

struct LayerDesc {
    LayerKind kind;
    int filters = 0, filter_h = 0, filter_w = 0, stride = 1; // conv
    int units = 0;                                           // fc
};

struct LayerShape {
    int h = 0, w = 0, c = 0;
};

// Ordered layer descriptors. The default factory below produces the exact
// MSNN sequence; the input extent is parametric so desk-scale runs stay fast.
struct NetworkSpec {
    int input_extent = 512;
    int input_channels = 1;
    std::vector<LayerDesc> layers;

    // Output shape of every layer, chained from the input.
    std::vector<LayerShape> shape_chain() const {
        std::vector<LayerShape> out;
        LayerShape cur{input_extent, input_extent, input_channels};
        for (const auto& d : layers) {
            switch (d.kind) {
                case LayerKind::Conv: {
                    Padding p = same_padding(d.filter_h, d.filter_w);
                    cur.h = conv_out_extent(cur.h, d.filter_h, p.top, p.bottom, d.stride, "H");
                    cur.w = conv_out_extent(cur.w, d.filter_w, p.left, p.right, d.stride, "W");
                    cur.c = d.filters;
                    break;
                }
                case LayerKind::MaxPool:
                    cur.h /= 2;
                    cur.w /= 2;
                    break;
                case LayerKind::Gap:
                    cur.h = 1;
                    cur.w = 1;
                    break;
                case LayerKind::Fc:
                    cur = {1, 1, d.units};
                    break;
                default: break; // BN, ReLU, SoftMax keep the shape
            }
            out.push_back(cur);
        }
        return out;
    }

    std::string canonical() const {
        std::string s = "msnn/v1;extent=" + std::to_string(input_extent) +
                        ";ch=" + std::to_string(input_channels);
        for (const auto& d : layers) {
            s += ";";
            s += layer_kind_name(d.kind);
            if (d.kind == LayerKind::Conv)
                s += ":" + std::to_string(d.filters) + "x" + std::to_string(d.filter_h) + "x" +
                     std::to_string(d.filter_w) + "s" + std::to_string(d.stride);
            if (d.kind == LayerKind::Fc) s += ":" + std::to_string(d.units);
        }
        return s;
    }

    std::uint64_t fingerprint() const { return fnv1a64(canonical()); }

    int conv_count() const {
        int n = 0;
        for (const auto& d : layers)
            if (d.kind == LayerKind::Conv) ++n;
        return n;
    }

    // Index of the k-th convolution layer (1-based k, as in "first conv").
    int conv_layer_index(int k) const {
        int seen = 0;
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].kind == LayerKind::Conv && ++seen == k) return static_cast<int>(i);
        throw shape_error("no convolution layer with index " + std::to_string(k));
    }

    // First ReLU after the given layer; featmaps and the feature head tap these.
    int relu_after(int idx) const {
        for (std::size_t i = idx + 1; i < layers.size(); ++i)
            if (layers[i].kind == LayerKind::Relu) return static_cast<int>(i);
        throw shape_error("no ReLU after layer " + std::to_string(idx));
    }

    // The deep-feature layer: ReLU following the first FC stage.
    int feature_layer_index() const {
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].kind == LayerKind::Fc) return relu_after(static_cast<int>(i));
        throw shape_error("spec has no FC layer");
    }

    int feature_dim() const {
        for (const auto& d : layers)
            if (d.kind == LayerKind::Fc) return d.units;
        throw shape_error("spec has no FC layer");
    }
};

// The MSNN stack: five conv/BN/ReLU/pool blocks, a sixth conv block without
// pooling, GAP, FC(512)+BN+ReLU, FC(2), SoftMax.
inline NetworkSpec build_msnn(int input_extent, int channels = 1) {
    if (input_extent < 32 || input_extent % 32 != 0)
        throw shape_error("input extent " + std::to_string(input_extent) +
                          " is not divisible by 32 (five pooling stages)");
    NetworkSpec spec;
    spec.input_extent = input_extent;
    spec.input_channels = channels;
    auto conv = [&](int filters, int size) {
        spec.layers.push_back({LayerKind::Conv, filters, size, size, 1, 0});
        spec.layers.push_back({LayerKind::BatchNorm});
        spec.layers.push_back({LayerKind::Relu});
    };
    conv(8, 6);
    spec.layers.push_back({LayerKind::MaxPool});
    conv(16, 3);
    spec.layers.push_back({LayerKind::MaxPool});
    conv(32, 3);
    spec.layers.push_back({LayerKind::MaxPool});
    conv(64, 3);
    spec.layers.push_back({LayerKind::MaxPool});
    conv(128, 3);
    spec.layers.push_back({LayerKind::MaxPool});
    conv(256, 3);
    spec.layers.push_back({LayerKind::Gap});
    spec.layers.push_back({LayerKind::Fc, 0, 0, 0, 1, 512});
    spec.layers.push_back({LayerKind::BatchNorm});
    spec.layers.push_back({LayerKind::Relu});
    spec.layers.push_back({LayerKind::Fc, 0, 0, 0, 1, 2});
    spec.layers.push_back({LayerKind::Softmax});
    return spec;
}

struct LayerReport {
    std::string type;
    LayerShape out;
    long learnable = 0;
    long tracked = 0;
    std::string detail;
};

// Per-layer parameter table, computed from the spec alone (no weights
// materialized, so extent 512 is instant).
inline std::vector<LayerReport> param_report(const NetworkSpec& spec) {
    std::vector<LayerReport> rows;
    auto shapes = spec.shape_chain();
    LayerShape prev{spec.input_extent, spec.input_extent, spec.input_channels};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& d = spec.layers[i];
        LayerReport r;
        r.type = layer_kind_name(d.kind);
        r.out = shapes[i];
        switch (d.kind) {
            case LayerKind::Conv:
                r.learnable =
                    static_cast<long>(d.filter_h) * d.filter_w * prev.c * d.filters + d.filters;
                r.detail = std::to_string(d.filters) + " @ [" + std::to_string(d.filter_h) + " " +
                           std::to_string(d.filter_w) + "], same";
                break;
            case LayerKind::BatchNorm:
                r.learnable = 2L * prev.c;
                r.tracked = 2L * prev.c;
                break;
            case LayerKind::Fc:
                r.learnable = static_cast<long>(prev.h) * prev.w * prev.c * d.units + d.units;
                break;
            case LayerKind::MaxPool: r.detail = "[2 2], stride [2 2]"; break;
            default: break;
        }
        rows.push_back(std::move(r));
        prev = shapes[i];
    }
    return rows;
}

template <typename T>
struct Network {
    using Layer = std::variant<Conv2d<T>, BatchNorm<T>, Relu<T>, MaxPool2<T>, GlobalAvgPool<T>,
                               FullyConnected<T>, Softmax<T>>;
    using Tape = std::variant<std::monostate, typename Conv2d<T>::Tape,
                              typename BatchNorm<T>::Tape, typename Relu<T>::Tape,
                              typename MaxPool2<T>::Tape, typename GlobalAvgPool<T>::Tape,
                              typename FullyConnected<T>::Tape, typename Softmax<T>::Tape>;

    NetworkSpec spec;
    std::vector<Layer> layers;
    std::uint64_t init_seed = 0;
    std::uint32_t epochs_completed = 0;

    // He-scaled Gaussian init for conv/FC, identity affine for BN.
    static Network init(const NetworkSpec& spec, std::uint64_t seed) {
        Network net;
        net.spec = spec;
        net.init_seed = seed;
        auto shapes = spec.shape_chain();
        LayerShape prev{spec.input_extent, spec.input_extent, spec.input_channels};
        for (std::size_t i = 0; i < spec.layers.size(); ++i) {
            const auto& d = spec.layers[i];
            Rng rng(seed, i);
            switch (d.kind) {
                case LayerKind::Conv: {
                    Conv2d<T> l;
                    l.filter_h = d.filter_h;
                    l.filter_w = d.filter_w;
                    l.in_c = prev.c;
                    l.out_c = d.filters;
                    l.stride = d.stride;
                    l.pad = same_padding(d.filter_h, d.filter_w);
                    double scale = std::sqrt(2.0 / (static_cast<double>(d.filter_h) * d.filter_w *
                                                    prev.c));
                    l.w.resize(static_cast<std::size_t>(d.filter_h) * d.filter_w * prev.c *
                               d.filters);
                    for (auto& v : l.w) v = static_cast<T>(rng.normal(0.0, scale));
                    l.b.assign(d.filters, T(0));
                    net.layers.emplace_back(std::move(l));
                    break;
                }
                case LayerKind::BatchNorm: {
                    BatchNorm<T> l;
                    l.channels = prev.c;
                    l.gamma.assign(prev.c, T(1));
                    l.beta.assign(prev.c, T(0));
                    l.running_mean.assign(prev.c, T(0));
                    l.running_var.assign(prev.c, T(1));
                    net.layers.emplace_back(std::move(l));
                    break;
                }
                case LayerKind::Relu: net.layers.emplace_back(Relu<T>{}); break;
                case LayerKind::MaxPool: net.layers.emplace_back(MaxPool2<T>{}); break;
                case LayerKind::Gap: net.layers.emplace_back(GlobalAvgPool<T>{}); break;
                case LayerKind::Fc: {
                    FullyConnected<T> l;
                    l.in_dim = prev.h * prev.w * prev.c;
                    l.out_dim = d.units;
                    double scale = std::sqrt(2.0 / static_cast<double>(l.in_dim));
                    l.w.resize(static_cast<std::size_t>(l.in_dim) * d.units);
                    for (auto& v : l.w) v = static_cast<T>(rng.normal(0.0, scale));
                    l.b.assign(d.units, T(0));
                    net.layers.emplace_back(std::move(l));
                    break;
                }
                case LayerKind::Softmax: net.layers.emplace_back(Softmax<T>{}); break;
            }
            prev = shapes[i];
        }
        return net;
    }

    void validate_batch(const Tensor<T>& x) const {
        if (x.h != spec.input_extent || x.w != spec.input_extent || x.c != spec.input_channels)
            throw shape_error("batch shape " + shape_str(x.n, x.h, x.w, x.c) +
                              " does not match network input [" +
                              std::to_string(spec.input_extent) + "," +
                              std::to_string(spec.input_extent) + "," +
                              std::to_string(spec.input_channels) + "]");
    }

    // Inference-mode forward. Thread-safe against concurrent callers; BN uses
    // running statistics only. Optionally captures one layer's activations.
    Tensor<T> forward(const Tensor<T>& x, int capture_layer = -1,
                      Tensor<T>* captured = nullptr) const {
        validate_batch(x);
        Tensor<T> cur = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            // BatchNorm's plain forward is the running-statistics path, so the
            // same call is infer-mode for every layer kind.
            cur = std::visit([&](const auto& l) -> Tensor<T> { return l.forward(cur); },
                             layers[i]);
            if (static_cast<int>(i) == capture_layer && captured) *captured = cur;
        }
        return cur;
    }

    // Training-mode forward; fills one tape per layer and updates BN running
    // statistics.
    Tensor<T> forward_train(const Tensor<T>& x, std::vector<Tape>& tapes) {
        validate_batch(x);
        tapes.assign(layers.size(), Tape{});
        Tensor<T> cur = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            cur = std::visit(
                [&](auto& l) -> Tensor<T> {
                    using L = std::decay_t<decltype(l)>;
                    typename L::Tape tape{};
                    Tensor<T> out;
                    if constexpr (std::is_same_v<L, BatchNorm<T>>)
                        out = l.forward_train(cur, tape);
                    else
                        out = l.forward(cur, &tape);
                    tapes[i] = std::move(tape);
                    return out;
                },
                layers[i]);
        }
        return cur;
    }

    // Backpropagates the probability-space gradient through every layer;
    // grads[i] holds the learnable-blob gradients of layer i.
    Tensor<T> backward(const std::vector<Tape>& tapes, const Tensor<T>& grad_probs,
                       std::vector<GradBlobs<T>>& grads) const {
        if (tapes.size() != layers.size())
            throw shape_error("backward: tape count does not match layer count");
        grads.assign(layers.size(), GradBlobs<T>{});
        Tensor<T> g = grad_probs;
        for (std::size_t ri = layers.size(); ri-- > 0;) {
            g = std::visit(
                [&](const auto& l) -> Tensor<T> {
                    using L = std::decay_t<decltype(l)>;
                    const auto* tape = std::get_if<typename L::Tape>(&tapes[ri]);
                    if (!tape)
                        throw shape_error("backward: tape/layer mismatch at layer " +
                                          std::to_string(ri));
                    if constexpr (std::is_same_v<L, Conv2d<T>> ||
                                  std::is_same_v<L, BatchNorm<T>> ||
                                  std::is_same_v<L, FullyConnected<T>>)
                        return l.backward(*tape, g, grads[ri]);
                    else
                        return l.backward(*tape, g);
                },
                layers[ri]);
        }
        return g;
    }

    // Learnable parameter blobs per layer, in checkpoint order. BN running
    // statistics are tracked state, not learnable, and are excluded.
    std::vector<std::vector<std::vector<T>*>> learnable_blobs() {
        std::vector<std::vector<std::vector<T>*>> out(layers.size());
        for (std::size_t i = 0; i < layers.size(); ++i) {
            std::visit(
                [&](auto& l) {
                    using L = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<L, Conv2d<T>> ||
                                  std::is_same_v<L, FullyConnected<T>>)
                        out[i] = {&l.w, &l.b};
                    else if constexpr (std::is_same_v<L, BatchNorm<T>>)
                        out[i] = {&l.gamma, &l.beta};
                },
                layers[i]);
        }
        return out;
    }

    long total_learnable() const {
        long total = 0;
        for (const auto& r : param_report(spec)) total += r.learnable;
        return total;
    }
};

} // namespace msnn
