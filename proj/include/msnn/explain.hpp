#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/network.hpp"
#include "msnn/tensor.hpp"

namespace msnn {

struct OcclusionConfig {
    int mask_size = 0;       // gray square side, pixels
    int stride = 0;          // mask step, pixels
    float mask_value = 0.5f; // mid-gray in normalized intensity

    static OcclusionConfig defaults_for(int extent) {
        OcclusionConfig cfg;
        cfg.mask_size = std::max(1, extent / 8);
        cfg.stride = std::max(1, cfg.mask_size / 2); // 50% overlap
        return cfg;
    }

    void validate(int extent) const {
        if (mask_size < 1 || mask_size > extent)
            throw shape_error("occlusion: mask_size must lie in [1, extent]");
        if (stride < 1 || stride > mask_size)
            throw shape_error("occlusion: stride must lie in [1, mask_size]");
        if (!(mask_value >= 0.0f && mask_value <= 1.0f))
            throw shape_error("occlusion: mask gray value must lie in [0,1]");
    }
};

// Grid of probability drops: delta(i,j) = p_target(original) -
// p_target(occluded at i,j). Positive delta means the region supports the
// classification.
struct SensitivityMap {
    int grid_h = 0, grid_w = 0;
    int extent = 0; // source image extent
    std::vector<float> delta;
    int target_class = 1;
    std::string image_id;
    OcclusionConfig config;
    double baseline[2] = {0, 0}; // class probabilities of the unmasked image

    float at(int i, int j) const { return delta[static_cast<std::size_t>(i) * grid_w + j]; }

    // Pixel coordinates of a cell's mask center.
    std::pair<double, double> cell_center(int i, int j) const {
        return {i * config.stride + config.mask_size / 2.0,
                j * config.stride + config.mask_size / 2.0};
    }

    std::pair<int, int> argmax_cell() const {
        int best = 0;
        for (std::size_t k = 1; k < delta.size(); ++k)
            if (delta[k] > delta[best]) best = static_cast<int>(k);
        return {best / grid_w, best % grid_w};
    }

    void save_csv(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw io_error("cannot write sensitivity map: " + path);
        char buf[48];
        for (int i = 0; i < grid_h; ++i) {
            for (int j = 0; j < grid_w; ++j) {
                std::snprintf(buf, sizeof(buf), "%.9g", at(i, j));
                out << buf << (j + 1 < grid_w ? "," : "");
            }
            out << "\n";
        }
    }
};

// One infer-mode forward per mask position, batched to keep the network's
// internal parallelism busy; the baseline is computed once.
template <typename T>
SensitivityMap occlusion_map(const Network<T>& net, const Tensor<T>& image, int target_class,
                             OcclusionConfig cfg, const std::string& image_id = "") {
    int extent = net.spec.input_extent;
    if (image.n != 1 || image.h != extent || image.w != extent || image.c != 1)
        throw shape_error("occlusion: image shape " +
                          shape_str(image.n, image.h, image.w, image.c) +
                          " does not match network input extent " + std::to_string(extent));
    if (target_class != 0 && target_class != 1)
        throw shape_error("occlusion: target class must be 0 or 1");
    cfg.validate(extent);

    SensitivityMap map;
    map.grid_h = (extent - cfg.mask_size) / cfg.stride + 1;
    map.grid_w = map.grid_h;
    map.extent = extent;
    map.delta.assign(static_cast<std::size_t>(map.grid_h) * map.grid_w, 0.0f);
    map.target_class = target_class;
    map.image_id = image_id;
    map.config = cfg;

    auto base = net.forward(image);
    map.baseline[0] = base(0, 0, 0, 0);
    map.baseline[1] = base(0, 0, 0, 1);
    double p_base = map.baseline[target_class];

    const int total = map.grid_h * map.grid_w;
    const int batch_cap = 16;
    for (int start = 0; start < total; start += batch_cap) {
        int count = std::min(batch_cap, total - start);
        Tensor<T> batch(count, extent, extent, 1);
        for (int b = 0; b < count; ++b) {
            std::copy(image.data.begin(), image.data.end(),
                      batch.data.begin() + static_cast<std::size_t>(b) * image.size());
            int cell = start + b;
            int top = (cell / map.grid_w) * cfg.stride;
            int left = (cell % map.grid_w) * cfg.stride;
            T* item = batch.item(b);
            for (int y = top; y < top + cfg.mask_size; ++y)
                for (int x = left; x < left + cfg.mask_size; ++x)
                    item[static_cast<std::size_t>(y) * extent + x] = T(cfg.mask_value);
        }
        auto probs = net.forward(batch);
        for (int b = 0; b < count; ++b)
            map.delta[start + b] =
                static_cast<float>(p_base - probs(b, 0, 0, target_class));
    }
    return map;
}

struct GrayRaster {
    int width = 0, height = 0;
    std::vector<float> pixels;
};

struct ColorRaster {
    int width = 0, height = 0;
    std::vector<float> rgb;
};

namespace viz_detail {

// blue -> cyan -> green -> yellow -> red; the degenerate mid value renders
// green.
inline void jet(float t, float& r, float& g, float& b) {
    struct Stop {
        float t, r, g, b;
    };
    static const Stop stops[] = {
        {0.00f, 0, 0, 1}, {0.25f, 0, 1, 1}, {0.50f, 0, 1, 0}, {0.75f, 1, 1, 0}, {1.00f, 1, 0, 0},
    };
    t = std::clamp(t, 0.0f, 1.0f);
    for (int i = 0; i < 4; ++i) {
        if (t <= stops[i + 1].t) {
            float u = (t - stops[i].t) / (stops[i + 1].t - stops[i].t);
            r = stops[i].r + u * (stops[i + 1].r - stops[i].r);
            g = stops[i].g + u * (stops[i + 1].g - stops[i].g);
            b = stops[i].b + u * (stops[i + 1].b - stops[i].b);
            return;
        }
    }
    r = 1;
    g = 0;
    b = 0;
}

// Half-pixel-center bilinear resize of an arbitrary grid to a square raster.
inline std::vector<float> bilinear_upsample(const std::vector<float>& src, int src_h, int src_w,
                                            int dst_extent) {
    std::vector<float> dst(static_cast<std::size_t>(dst_extent) * dst_extent);
    for (int y = 0; y < dst_extent; ++y) {
        double sy = (y + 0.5) * src_h / dst_extent - 0.5;
        double cy = std::clamp(sy, 0.0, static_cast<double>(src_h - 1));
        int y0 = static_cast<int>(std::floor(cy));
        int y1 = std::min(y0 + 1, src_h - 1);
        double fy = cy - y0;
        for (int x = 0; x < dst_extent; ++x) {
            double sx = (x + 0.5) * src_w / dst_extent - 0.5;
            double cx = std::clamp(sx, 0.0, static_cast<double>(src_w - 1));
            int x0 = static_cast<int>(std::floor(cx));
            int x1 = std::min(x0 + 1, src_w - 1);
            double fx = cx - x0;
            double top = src[static_cast<std::size_t>(y0) * src_w + x0] * (1 - fx) +
                         src[static_cast<std::size_t>(y0) * src_w + x1] * fx;
            double bot = src[static_cast<std::size_t>(y1) * src_w + x0] * (1 - fx) +
                         src[static_cast<std::size_t>(y1) * src_w + x1] * fx;
            dst[static_cast<std::size_t>(y) * dst_extent + x] =
                static_cast<float>(top * (1 - fy) + bot * fy);
        }
    }
    return dst;
}

// Min-max normalization to [0,1]; a constant input maps to all-0.5.
inline void normalize_range(std::vector<float>& v) {
    float lo = v[0], hi = v[0];
    for (float x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi > lo)
        for (auto& x : v) x = (x - lo) / (hi - lo);
    else
        for (auto& x : v) x = 0.5f;
}

inline GrayRaster tile_planes(const std::vector<std::vector<float>>& planes, int plane_h,
                              int plane_w) {
    int count = static_cast<int>(planes.size());
    int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
    int rows = (count + cols - 1) / cols;
    GrayRaster out;
    out.width = cols * plane_w + (cols - 1);
    out.height = rows * plane_h + (rows - 1);
    out.pixels.assign(static_cast<std::size_t>(out.width) * out.height, 0.0f);
    for (int k = 0; k < count; ++k) {
        int ty = (k / cols) * (plane_h + 1);
        int tx = (k % cols) * (plane_w + 1);
        for (int y = 0; y < plane_h; ++y)
            for (int x = 0; x < plane_w; ++x)
                out.pixels[static_cast<std::size_t>(ty + y) * out.width + tx + x] =
                    planes[k][static_cast<std::size_t>(y) * plane_w + x];
    }
    return out;
}

} // namespace viz_detail

// Map upsampled to the image extent, normalized over its own range, colored
// blue->red and alpha-blended over the grayscale image.
template <typename T>
ColorRaster overlay(const Tensor<T>& image, const SensitivityMap& map, float alpha = 0.4f) {
    if (image.h != map.extent || image.w != map.extent)
        throw shape_error("overlay: map belongs to a " + std::to_string(map.extent) +
                          "-pixel image, got " + std::to_string(image.h));
    std::vector<float> up =
        viz_detail::bilinear_upsample(map.delta, map.grid_h, map.grid_w, map.extent);
    viz_detail::normalize_range(up);
    ColorRaster out;
    out.width = out.height = map.extent;
    out.rgb.resize(static_cast<std::size_t>(map.extent) * map.extent * 3);
    for (std::size_t i = 0; i < up.size(); ++i) {
        float r, g, b;
        viz_detail::jet(up[i], r, g, b);
        float gray = static_cast<float>(image.data[i]);
        out.rgb[3 * i + 0] = (1 - alpha) * gray + alpha * r;
        out.rgb[3 * i + 1] = (1 - alpha) * gray + alpha * g;
        out.rgb[3 * i + 2] = (1 - alpha) * gray + alpha * b;
    }
    return out;
}

// Filters of the k-th convolution (1-based), first input channel of each
// filter min-max normalized and tiled in a near-square grid with 1-pixel
// separators.
template <typename T>
GrayRaster visualize_filters(const Network<T>& net, int conv_index) {
    int li = net.spec.conv_layer_index(conv_index);
    const auto& conv = std::get<Conv2d<T>>(net.layers[li]);
    std::vector<std::vector<float>> planes(conv.out_c);
    for (int oc = 0; oc < conv.out_c; ++oc) {
        auto& plane = planes[oc];
        plane.resize(static_cast<std::size_t>(conv.filter_h) * conv.filter_w);
        for (int fy = 0; fy < conv.filter_h; ++fy)
            for (int fx = 0; fx < conv.filter_w; ++fx)
                plane[static_cast<std::size_t>(fy) * conv.filter_w + fx] = static_cast<float>(
                    conv.w[((static_cast<std::size_t>(fy) * conv.filter_w + fx) * conv.in_c) *
                               conv.out_c +
                           oc]);
        viz_detail::normalize_range(plane);
    }
    return viz_detail::tile_planes(planes, conv.filter_h, conv.filter_w);
}

// Post-ReLU activations of the k-th convolution block on one image, one tile
// per channel.
template <typename T>
GrayRaster feature_maps(const Network<T>& net, const Tensor<T>& image, int conv_index) {
    int li = net.spec.relu_after(net.spec.conv_layer_index(conv_index));
    Tensor<T> captured;
    net.forward(image, li, &captured);
    std::vector<std::vector<float>> planes(captured.c);
    for (int ch = 0; ch < captured.c; ++ch) {
        auto& plane = planes[ch];
        plane.resize(static_cast<std::size_t>(captured.h) * captured.w);
        for (int y = 0; y < captured.h; ++y)
            for (int x = 0; x < captured.w; ++x)
                plane[static_cast<std::size_t>(y) * captured.w + x] =
                    static_cast<float>(captured(0, y, x, ch));
        viz_detail::normalize_range(plane);
    }
    return viz_detail::tile_planes(planes, captured.h, captured.w);
}

// The paper-style caption, e.g. "Cancer image (0.97); Non-Cancerous image (0.03)".
inline std::string caption_line(double p_cancer, double p_non) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "Cancer image (%.2f); Non-Cancerous image (%.2f)", p_cancer,
                  p_non);
    return buf;
}

} // namespace msnn
