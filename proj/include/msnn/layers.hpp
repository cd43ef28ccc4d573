#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/parallel.hpp"
#include "msnn/tensor.hpp"

namespace msnn {

enum class Mode { Train, Infer };

template <typename T>
using GradBlobs = std::vector<std::vector<T>>; // one entry per learnable blob

// 2-D convolution, weights laid out (filter_h, filter_w, in_c, out_c) so an
// im2col row times the weight matrix lands directly in NHWC scan order.
template <typename T>
struct Conv2d {
    int filter_h = 0, filter_w = 0, in_c = 0, out_c = 0, stride = 1;
    Padding pad;
    std::vector<T> w; // filter_h*filter_w*in_c*out_c
    std::vector<T> b; // out_c

    struct Tape {
        std::vector<Matrix<T>> cols; // one column matrix per batch item
        int in_h = 0, in_w = 0, in_n = 0;
    };

    long param_count() const {
        return static_cast<long>(filter_h) * filter_w * in_c * out_c + out_c;
    }

    void validate_input(const Tensor<T>& x) const {
        if (x.c != in_c)
            throw shape_error("conv2d: input has " + std::to_string(x.c) +
                              " channels, filters expect " + std::to_string(in_c));
    }

    Tensor<T> forward(const Tensor<T>& x, Tape* tape = nullptr) const {
        validate_input(x);
        int oh = conv_out_extent(x.h, filter_h, pad.top, pad.bottom, stride, "H");
        int ow = conv_out_extent(x.w, filter_w, pad.left, pad.right, stride, "W");
        Tensor<T> y(x.n, oh, ow, out_c);
        Matrix<T> wm(filter_h * filter_w * in_c, out_c);
        wm.data = w;
        if (tape) {
            tape->cols.clear();
            tape->in_h = x.h;
            tape->in_w = x.w;
            tape->in_n = x.n;
        }
        for (int item = 0; item < x.n; ++item) {
            Matrix<T> cols = im2col(x, item, filter_h, filter_w, stride, pad);
            Matrix<T> prod = matmul(cols, wm);
            T* dst = y.item(item);
            for (int p = 0; p < prod.rows; ++p) {
                const T* row = prod.row(p);
                for (int oc = 0; oc < out_c; ++oc) dst[p * out_c + oc] = row[oc] + b[oc];
            }
            if (tape) tape->cols.push_back(std::move(cols));
        }
        ensure_finite(y, "conv2d forward");
        return y;
    }

    Tensor<T> backward(const Tape& tape, const Tensor<T>& gy, GradBlobs<T>& grads) const {
        if (static_cast<int>(tape.cols.size()) != gy.n || gy.c != out_c)
            throw shape_error("conv2d backward: tape does not match output gradient");
        grads.assign(2, {});
        auto& gw = grads[0];
        auto& gb = grads[1];
        gw.assign(w.size(), T(0));
        gb.assign(b.size(), T(0));
        Matrix<T> wt(out_c, filter_h * filter_w * in_c);
        {
            Matrix<T> wm(filter_h * filter_w * in_c, out_c);
            wm.data = w;
            wt = transpose(wm);
        }
        Tensor<T> gx(tape.in_n, tape.in_h, tape.in_w, in_c);
        int positions = gy.h * gy.w;
        for (int item = 0; item < gy.n; ++item) {
            Matrix<T> gy_m(positions, out_c);
            const T* src = gy.item(item);
            std::copy(src, src + static_cast<std::size_t>(positions) * out_c, gy_m.data.begin());

            // bias gradient, scan order
            for (int p = 0; p < positions; ++p)
                for (int oc = 0; oc < out_c; ++oc) gb[oc] += gy_m.at(p, oc);

            Matrix<T> gw_item = matmul(transpose(tape.cols[item]), gy_m);
            for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += gw_item.data[i];

            Matrix<T> gcols = matmul(gy_m, wt);
            col2im_add(gcols, gx, item, filter_h, filter_w, stride, pad);
        }
        ensure_finite(gx, "conv2d backward");
        return gx;
    }
};

// Spatial batch normalization: statistics per channel over all N*H*W
// positions in train mode, running estimates in infer mode.
template <typename T>
struct BatchNorm {
    int channels = 0;
    double epsilon = 1e-5;
    double momentum = 0.1; // new = (1-momentum)*old + momentum*batch
    std::vector<T> gamma, beta;
    std::vector<T> running_mean, running_var;

    struct Tape {
        Tensor<T> xhat;
        std::vector<T> inv_std; // per channel
        std::size_t m = 0;      // positions per channel
    };

    long param_count() const { return 2L * channels; }   // learnable
    long tracked_count() const { return 2L * channels; } // running statistics

    void validate_input(const Tensor<T>& x) const {
        if (x.c != channels)
            throw shape_error("batchnorm: input has " + std::to_string(x.c) +
                              " channels, layer has " + std::to_string(channels));
    }

    Tensor<T> forward_train(const Tensor<T>& x, Tape& tape) {
        validate_input(x);
        std::size_t m = static_cast<std::size_t>(x.n) * x.h * x.w;
        if (m == 0) throw shape_error("batchnorm: empty batch");
        tape.xhat = Tensor<T>(x.n, x.h, x.w, x.c);
        tape.inv_std.assign(channels, T(0));
        tape.m = m;
        Tensor<T> y(x.n, x.h, x.w, x.c);
        parallel_for(channels, [&](std::int64_t ch) {
            double sum = 0;
            for (std::size_t i = 0; i < m; ++i) sum += x.data[i * channels + ch];
            double mean = sum / static_cast<double>(m);
            double sq = 0;
            for (std::size_t i = 0; i < m; ++i) {
                double d = x.data[i * channels + ch] - mean;
                sq += d * d;
            }
            double var = sq / static_cast<double>(m);
            double inv = 1.0 / std::sqrt(var + epsilon);
            tape.inv_std[ch] = static_cast<T>(inv);
            for (std::size_t i = 0; i < m; ++i) {
                double xh = (x.data[i * channels + ch] - mean) * inv;
                tape.xhat.data[i * channels + ch] = static_cast<T>(xh);
                y.data[i * channels + ch] = static_cast<T>(gamma[ch] * xh + beta[ch]);
            }
            running_mean[ch] =
                static_cast<T>((1.0 - momentum) * running_mean[ch] + momentum * mean);
            running_var[ch] = static_cast<T>((1.0 - momentum) * running_var[ch] + momentum * var);
        });
        ensure_finite(y, "batchnorm forward");
        return y;
    }

    Tensor<T> forward(const Tensor<T>& x) const { // infer mode
        validate_input(x);
        Tensor<T> y(x.n, x.h, x.w, x.c);
        std::size_t m = static_cast<std::size_t>(x.n) * x.h * x.w;
        parallel_for(channels, [&](std::int64_t ch) {
            double inv = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + epsilon);
            double mu = running_mean[ch];
            for (std::size_t i = 0; i < m; ++i)
                y.data[i * channels + ch] = static_cast<T>(
                    gamma[ch] * ((x.data[i * channels + ch] - mu) * inv) + beta[ch]);
        });
        ensure_finite(y, "batchnorm forward");
        return y;
    }

    // Full train-mode gradient, including the paths through the batch mean
    // and variance.
    Tensor<T> backward(const Tape& tape, const Tensor<T>& gy, GradBlobs<T>& grads) const {
        if (gy.c != channels || gy.size() != tape.xhat.size())
            throw shape_error("batchnorm backward: tape does not match output gradient");
        grads.assign(2, {});
        auto& dgamma = grads[0];
        auto& dbeta = grads[1];
        dgamma.assign(channels, T(0));
        dbeta.assign(channels, T(0));
        Tensor<T> gx(gy.n, gy.h, gy.w, gy.c);
        std::size_t m = tape.m;
        parallel_for(channels, [&](std::int64_t ch) {
            double sum_gy = 0, sum_gy_xhat = 0;
            for (std::size_t i = 0; i < m; ++i) {
                double g = gy.data[i * channels + ch];
                sum_gy += g;
                sum_gy_xhat += g * tape.xhat.data[i * channels + ch];
            }
            dbeta[ch] = static_cast<T>(sum_gy);
            dgamma[ch] = static_cast<T>(sum_gy_xhat);
            double scale = static_cast<double>(gamma[ch]) * tape.inv_std[ch] /
                           static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i) {
                double g = gy.data[i * channels + ch];
                double xh = tape.xhat.data[i * channels + ch];
                gx.data[i * channels + ch] = static_cast<T>(
                    scale * (static_cast<double>(m) * g - sum_gy - xh * sum_gy_xhat));
            }
        });
        ensure_finite(gx, "batchnorm backward");
        return gx;
    }
};

// max(0, x); x == 0 maps to 0 with zero gradient.
template <typename T>
struct Relu {
    struct Tape {
        std::vector<std::uint8_t> mask; // 1 where input > 0
    };

    Tensor<T> forward(const Tensor<T>& x, Tape* tape = nullptr) const {
        Tensor<T> y(x.n, x.h, x.w, x.c);
        if (tape) tape->mask.assign(x.size(), 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x.data[i] > T(0)) {
                y.data[i] = x.data[i];
                if (tape) tape->mask[i] = 1;
            }
        }
        ensure_finite(y, "relu forward");
        return y;
    }

    Tensor<T> backward(const Tape& tape, const Tensor<T>& gy) const {
        if (tape.mask.size() != gy.size())
            throw shape_error("relu backward: tape does not match output gradient");
        Tensor<T> gx(gy.n, gy.h, gy.w, gy.c);
        for (std::size_t i = 0; i < gy.size(); ++i)
            gx.data[i] = tape.mask[i] ? gy.data[i] : T(0);
        return gx;
    }
};

// 2x2 max pooling with stride 2; ties go to the first position in scan order.
template <typename T>
struct MaxPool2 {
    struct Tape {
        std::vector<std::int32_t> argmax; // flat input index within item, per output element
        int in_h = 0, in_w = 0;
    };

    Tensor<T> forward(const Tensor<T>& x, Tape* tape = nullptr) const {
        if (x.h % 2 != 0 || x.w % 2 != 0)
            throw shape_error("maxpool: odd spatial extent " + shape_str(x.n, x.h, x.w, x.c) +
                              " without padding");
        int oh = x.h / 2, ow = x.w / 2;
        Tensor<T> y(x.n, oh, ow, x.c);
        if (tape) {
            tape->argmax.assign(y.size(), 0);
            tape->in_h = x.h;
            tape->in_w = x.w;
        }
        parallel_for(x.n, [&](std::int64_t item) {
            const T* src = x.item(static_cast<int>(item));
            T* dst = y.item(static_cast<int>(item));
            std::size_t obase = static_cast<std::size_t>(item) * oh * ow * x.c;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    for (int ic = 0; ic < x.c; ++ic) {
                        T best{};
                        std::int32_t best_idx = -1;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                std::int32_t idx =
                                    ((oy * 2 + dy) * x.w + (ox * 2 + dx)) * x.c + ic;
                                if (best_idx < 0 || src[idx] > best) {
                                    best = src[idx];
                                    best_idx = idx;
                                }
                            }
                        std::size_t o = (static_cast<std::size_t>(oy) * ow + ox) * x.c + ic;
                        dst[o] = best;
                        if (tape) tape->argmax[obase + o] = best_idx;
                    }
        });
        ensure_finite(y, "maxpool forward");
        return y;
    }

    Tensor<T> backward(const Tape& tape, const Tensor<T>& gy) const {
        if (tape.argmax.size() != gy.size())
            throw shape_error("maxpool backward: tape does not match output gradient");
        Tensor<T> gx(gy.n, tape.in_h, tape.in_w, gy.c);
        std::size_t per_item = gy.size() / gy.n;
        parallel_for(gy.n, [&](std::int64_t item) {
            T* dst = gx.item(static_cast<int>(item));
            const T* src = gy.item(static_cast<int>(item));
            std::size_t base = static_cast<std::size_t>(item) * per_item;
            for (std::size_t i = 0; i < per_item; ++i) dst[tape.argmax[base + i]] += src[i];
        });
        return gx;
    }
};

// Global average pooling, (N,H,W,C) -> (N,1,1,C).
template <typename T>
struct GlobalAvgPool {
    struct Tape {
        int in_h = 0, in_w = 0;
    };

    Tensor<T> forward(const Tensor<T>& x, Tape* tape = nullptr) const {
        if (x.h < 1 || x.w < 1) throw shape_error("gap: spatial extents must be positive");
        if (tape) {
            tape->in_h = x.h;
            tape->in_w = x.w;
        }
        Tensor<T> y(x.n, 1, 1, x.c);
        double count = static_cast<double>(x.h) * x.w;
        for (int item = 0; item < x.n; ++item) {
            const T* src = x.item(item);
            for (int ic = 0; ic < x.c; ++ic) {
                double acc = 0;
                for (int p = 0; p < x.h * x.w; ++p) acc += src[p * x.c + ic];
                y(item, 0, 0, ic) = static_cast<T>(acc / count);
            }
        }
        ensure_finite(y, "gap forward");
        return y;
    }

    Tensor<T> backward(const Tape& tape, const Tensor<T>& gy) const {
        Tensor<T> gx(gy.n, tape.in_h, tape.in_w, gy.c);
        double count = static_cast<double>(tape.in_h) * tape.in_w;
        for (int item = 0; item < gy.n; ++item) {
            T* dst = gx.item(item);
            for (int ic = 0; ic < gy.c; ++ic) {
                T g = static_cast<T>(gy(item, 0, 0, ic) / count);
                for (int p = 0; p < tape.in_h * tape.in_w; ++p) dst[p * gy.c + ic] = g;
            }
        }
        return gx;
    }
};

// y = x W + b with W laid out (in_dim, out_dim). Input spatial/channel dims
// are flattened, so this accepts the (N,1,1,C) tensors the GAP stage emits.
template <typename T>
struct FullyConnected {
    int in_dim = 0, out_dim = 0;
    std::vector<T> w; // in_dim * out_dim
    std::vector<T> b; // out_dim

    struct Tape {
        Matrix<T> input; // N x in_dim
    };

    long param_count() const { return static_cast<long>(in_dim) * out_dim + out_dim; }

    Tensor<T> forward(const Tensor<T>& x, Tape* tape = nullptr) const {
        if (x.h * x.w * x.c != in_dim)
            throw shape_error("fully_connected: input of " + std::to_string(x.h * x.w * x.c) +
                              " features, layer expects " + std::to_string(in_dim));
        Matrix<T> xm(x.n, in_dim);
        xm.data = x.data;
        Matrix<T> wm(in_dim, out_dim);
        wm.data = w;
        Matrix<T> prod = matmul(xm, wm);
        Tensor<T> y(x.n, 1, 1, out_dim);
        for (int item = 0; item < x.n; ++item)
            for (int oc = 0; oc < out_dim; ++oc) y(item, 0, 0, oc) = prod.at(item, oc) + b[oc];
        if (tape) tape->input = std::move(xm);
        ensure_finite(y, "fully_connected forward");
        return y;
    }

    Tensor<T> backward(const Tape& tape, const Tensor<T>& gy, GradBlobs<T>& grads) const {
        if (gy.c != out_dim || tape.input.rows != gy.n)
            throw shape_error("fully_connected backward: tape does not match output gradient");
        Matrix<T> gy_m(gy.n, out_dim);
        gy_m.data = gy.data;
        grads.assign(2, {});
        Matrix<T> gw = matmul(transpose(tape.input), gy_m);
        grads[0] = std::move(gw.data);
        auto& gb = grads[1];
        gb.assign(out_dim, T(0));
        for (int item = 0; item < gy.n; ++item)
            for (int oc = 0; oc < out_dim; ++oc) gb[oc] += gy_m.at(item, oc);
        Matrix<T> wm(in_dim, out_dim);
        wm.data = w;
        Matrix<T> gx_m = matmul(gy_m, transpose(wm));
        Tensor<T> gx(gy.n, 1, 1, in_dim);
        gx.data = std::move(gx_m.data);
        ensure_finite(gx, "fully_connected backward");
        return gx;
    }
};

// Row-wise softmax over the channel axis, max-subtracted for stability.
template <typename T>
struct Softmax {
    struct Tape {
        Tensor<T> probs;
    };

    Tensor<T> forward(const Tensor<T>& x, Tape* tape = nullptr) const {
        Tensor<T> y(x.n, x.h, x.w, x.c);
        if (x.c < 1) throw shape_error("softmax: needs at least one class");
        std::size_t rows = x.size() / x.c;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* in = x.data.data() + r * x.c;
            T* out = y.data.data() + r * x.c;
            double mx = in[0];
            for (int ic = 1; ic < x.c; ++ic) mx = std::max(mx, static_cast<double>(in[ic]));
            double denom = 0;
            for (int ic = 0; ic < x.c; ++ic) denom += std::exp(static_cast<double>(in[ic]) - mx);
            for (int ic = 0; ic < x.c; ++ic)
                out[ic] = static_cast<T>(std::exp(static_cast<double>(in[ic]) - mx) / denom);
        }
        ensure_finite(y, "softmax forward");
        if (tape) tape->probs = y;
        return y;
    }

    Tensor<T> backward(const Tape& tape, const Tensor<T>& gy) const {
        if (!tape.probs.same_shape(gy))
            throw shape_error("softmax backward: tape does not match output gradient");
        Tensor<T> gx(gy.n, gy.h, gy.w, gy.c);
        std::size_t rows = gy.size() / gy.c;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* p = tape.probs.data.data() + r * gy.c;
            const T* g = gy.data.data() + r * gy.c;
            T* out = gx.data.data() + r * gy.c;
            double dot = 0;
            for (int ic = 0; ic < gy.c; ++ic) dot += static_cast<double>(p[ic]) * g[ic];
            for (int ic = 0; ic < gy.c; ++ic)
                out[ic] = static_cast<T>(p[ic] * (static_cast<double>(g[ic]) - dot));
        }
        return gx;
    }
};

enum class LossKind { Mse, CrossEntropy };

inline const char* loss_name(LossKind k) { return k == LossKind::Mse ? "mse" : "cross_entropy"; }

template <typename T>
struct LossResult {
    double value = 0;
    Tensor<T> grad; // with respect to the probabilities
};

// Loss over softmax outputs. MSE is the paper's training loss; cross-entropy
// is offered as the conventional pairing with softmax. The cross-entropy
// probability is floored at 1e-12 before the log.
template <typename T>
LossResult<T> loss_with_grad(const Tensor<T>& probs, const std::vector<int>& labels,
                             LossKind kind) {
    if (static_cast<int>(labels.size()) != probs.n)
        throw shape_error("loss: one label per batch item required");
    constexpr double kFloor = 1e-12;
    LossResult<T> res;
    res.grad = Tensor<T>(probs.n, 1, 1, probs.c);
    double total = 0;
    for (int item = 0; item < probs.n; ++item) {
        int y = labels[item];
        if (y < 0 || y >= probs.c) throw shape_error("loss: label out of range");
        if (kind == LossKind::Mse) {
            for (int ic = 0; ic < probs.c; ++ic) {
                double t = ic == y ? 1.0 : 0.0;
                double d = probs(item, 0, 0, ic) - t;
                total += d * d;
                res.grad(item, 0, 0, ic) =
                    static_cast<T>(2.0 * d / (static_cast<double>(probs.n) * probs.c));
            }
        } else {
            double p = std::max(static_cast<double>(probs(item, 0, 0, y)), kFloor);
            total += -std::log(p);
            res.grad(item, 0, 0, y) = static_cast<T>(-1.0 / (static_cast<double>(probs.n) * p));
        }
    }
    res.value = kind == LossKind::Mse
                    ? total / (static_cast<double>(probs.n) * probs.c)
                    : total / static_cast<double>(probs.n);
    if (!std::isfinite(res.value)) throw numeric_error("loss: non-finite value");
    return res;
}

} // namespace msnn
