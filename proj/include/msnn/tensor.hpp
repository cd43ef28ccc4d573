#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/parallel.hpp"

namespace msnn {

inline std::string shape_str(int n, int h, int w, int c) {
    return "[" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
           std::to_string(c) + "]";
}

// Rank-4 dense tensor, (N,H,W,C) row-major. Carries activations, weights and
// gradients; scalar type is float in production and double for gradient-check
// instantiations.
template <typename T>
struct Tensor {
    int n = 0, h = 0, w = 0, c = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int h_, int w_, int c_) : n(n_), h(h_), w(w_), c(c_) {
        if (n < 0 || h < 0 || w < 0 || c < 0)
            throw shape_error("tensor extents must be non-negative, got " + shape_str(n, h, w, c));
        data.assign(size(), T(0));
    }

    std::size_t size() const {
        return static_cast<std::size_t>(n) * h * w * c;
    }
    std::array<int, 4> shape() const { return {n, h, w, c}; }
    bool same_shape(const Tensor& o) const {
        return n == o.n && h == o.h && w == o.w && c == o.c;
    }

    T& operator()(int in, int ih, int iw, int ic) {
        return data[((static_cast<std::size_t>(in) * h + ih) * w + iw) * c + ic];
    }
    const T& operator()(int in, int ih, int iw, int ic) const {
        return data[((static_cast<std::size_t>(in) * h + ih) * w + iw) * c + ic];
    }

    // Pointer to the start of one batch item, (H,W,C) contiguous.
    T* item(int in) { return data.data() + static_cast<std::size_t>(in) * h * w * c; }
    const T* item(int in) const { return data.data() + static_cast<std::size_t>(in) * h * w * c; }
};

template <typename T>
void ensure_finite(const std::vector<T>& v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!std::isfinite(static_cast<double>(v[i])))
            throw numeric_error(std::string(what) + ": non-finite value at index " +
                                std::to_string(i));
}

template <typename T>
void ensure_finite(const Tensor<T>& t, const char* what) {
    ensure_finite(t.data, what);
}

// Row-major dense matrix; scratch type for the im2col convolution path.
template <typename T>
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c) {
        if (r < 0 || c < 0) throw shape_error("matrix extents must be non-negative");
        data.assign(static_cast<std::size_t>(r) * c, T(0));
    }

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
};

// C = A x B. The k loop runs in ascending order for every output element, and
// row-parallelism never splits a reduction, so the summation order is fixed
// for any thread count.
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols != b.rows)
        throw shape_error("matmul: inner dimensions disagree (" + std::to_string(a.cols) +
                          " vs " + std::to_string(b.rows) + ")");
    Matrix<T> out(a.rows, b.cols);
    parallel_for(a.rows, [&](std::int64_t i) {
        T* dst = out.row(static_cast<int>(i));
        const T* arow = a.row(static_cast<int>(i));
        for (int k = 0; k < a.cols; ++k) {
            T aik = arow[k];
            const T* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) dst[j] += aik * brow[j];
        }
    });
    ensure_finite(out.data, "matmul");
    return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> out(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) out.at(c, r) = a.at(r, c);
    return out;
}

struct Padding {
    int top = 0, bottom = 0, left = 0, right = 0;
};

// Asymmetric "same" padding for stride-1 convolution: total f-1, split small
// half before, large half after (a 6x6 filter pads 2 before / 3 after).
inline Padding same_padding(int filter_h, int filter_w) {
    Padding p;
    p.top = (filter_h - 1) / 2;
    p.bottom = filter_h - 1 - p.top;
    p.left = (filter_w - 1) / 2;
    p.right = filter_w - 1 - p.left;
    return p;
}

inline int conv_out_extent(int in, int filter, int pad_lo, int pad_hi, int stride,
                           const char* axis) {
    int span = in + pad_lo + pad_hi - filter;
    if (span < 0 || span % stride != 0)
        throw shape_error(std::string("non-integral convolution output extent on ") + axis +
                          " axis: (" + std::to_string(in) + "+" + std::to_string(pad_lo) + "+" +
                          std::to_string(pad_hi) + "-" + std::to_string(filter) + ")/" +
                          std::to_string(stride));
    return span / stride + 1;
}

// Unrolls one batch item into receptive-field rows: (out_h*out_w) rows of
// (filter_h*filter_w*C), zero outside the padded bounds.
template <typename T>
Matrix<T> im2col(const Tensor<T>& x, int item, int filter_h, int filter_w, int stride,
                 const Padding& pad) {
    int oh = conv_out_extent(x.h, filter_h, pad.top, pad.bottom, stride, "H");
    int ow = conv_out_extent(x.w, filter_w, pad.left, pad.right, stride, "W");
    Matrix<T> cols(oh * ow, filter_h * filter_w * x.c);
    const T* src = x.item(item);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            T* dst = cols.row(oy * ow + ox);
            for (int fy = 0; fy < filter_h; ++fy) {
                int iy = oy * stride + fy - pad.top;
                for (int fx = 0; fx < filter_w; ++fx) {
                    int ix = ox * stride + fx - pad.left;
                    T* cell = dst + (fy * filter_w + fx) * x.c;
                    if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue; // stays zero
                    const T* px = src + (static_cast<std::size_t>(iy) * x.w + ix) * x.c;
                    for (int ic = 0; ic < x.c; ++ic) cell[ic] = px[ic];
                }
            }
        }
    }
    return cols;
}

// Scatter-add transpose of im2col; accumulates into one item of dst.
template <typename T>
void col2im_add(const Matrix<T>& cols, Tensor<T>& dst, int item, int filter_h, int filter_w,
                int stride, const Padding& pad) {
    int oh = conv_out_extent(dst.h, filter_h, pad.top, pad.bottom, stride, "H");
    int ow = conv_out_extent(dst.w, filter_w, pad.left, pad.right, stride, "W");
    if (cols.rows != oh * ow || cols.cols != filter_h * filter_w * dst.c)
        throw shape_error("col2im: column matrix does not match destination shape");
    T* out = dst.item(item);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const T* src = cols.row(oy * ow + ox);
            for (int fy = 0; fy < filter_h; ++fy) {
                int iy = oy * stride + fy - pad.top;
                if (iy < 0 || iy >= dst.h) continue;
                for (int fx = 0; fx < filter_w; ++fx) {
                    int ix = ox * stride + fx - pad.left;
                    if (ix < 0 || ix >= dst.w) continue;
                    T* px = out + (static_cast<std::size_t>(iy) * dst.w + ix) * dst.c;
                    const T* cell = src + (fy * filter_w + fx) * dst.c;
                    for (int ic = 0; ic < dst.c; ++ic) px[ic] += cell[ic];
                }
            }
        }
    }
}

enum class ReduceKind { Sum, Mean, Max };

// Reduces over the axes flagged true; reduced extents become 1. Accumulation
// runs in scan order, so results are reproducible for a fixed build.
template <typename T>
Tensor<T> reduce(const Tensor<T>& x, const std::array<bool, 4>& axes, ReduceKind kind) {
    std::array<int, 4> in_shape = x.shape();
    std::array<int, 4> out_shape = in_shape;
    std::size_t count = 1;
    for (int a = 0; a < 4; ++a) {
        if (axes[a]) {
            count *= static_cast<std::size_t>(in_shape[a]);
            out_shape[a] = 1;
        }
    }
    if (count == 0)
        throw shape_error("reduce: reduction over a zero-extent axis is empty");
    Tensor<T> out(out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    std::vector<bool> seen(out.size(), false);
    std::size_t idx = 0;
    for (int in = 0; in < x.n; ++in)
        for (int ih = 0; ih < x.h; ++ih)
            for (int iw = 0; iw < x.w; ++iw)
                for (int ic = 0; ic < x.c; ++ic, ++idx) {
                    int on = axes[0] ? 0 : in;
                    int oh = axes[1] ? 0 : ih;
                    int ow = axes[2] ? 0 : iw;
                    int oc = axes[3] ? 0 : ic;
                    std::size_t o =
                        ((static_cast<std::size_t>(on) * out.h + oh) * out.w + ow) * out.c + oc;
                    T v = x.data[idx];
                    if (kind == ReduceKind::Max) {
                        if (!seen[o] || v > out.data[o]) out.data[o] = v;
                        seen[o] = true;
                    } else {
                        out.data[o] += v;
                    }
                }
    if (kind == ReduceKind::Mean)
        for (auto& v : out.data) v = static_cast<T>(v / static_cast<T>(count));
    ensure_finite(out, "reduce");
    return out;
}

} // namespace msnn
