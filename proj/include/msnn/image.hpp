#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/tensor.hpp"

namespace msnn {

// One grayscale image, intensities normalized to [0,1], square extent.
struct ImageRecord {
    int extent = 0;
    std::vector<float> pixels; // extent*extent, row-major
    std::string format;        // pgm | raw16 | dicom
    int source_bit_depth = 8;
    std::string window_note; // windowing applied during DICOM conversion, if any

    float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * extent + x]; }
};

namespace netpbm {

inline int read_header_int(std::istream& in, const std::string& path) {
    // skips whitespace and '#' comment lines
    int ch;
    while ((ch = in.peek()) != EOF) {
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int value;
    if (!(in >> value) || value < 0) throw io_error("malformed netpbm header in " + path);
    return value;
}

} // namespace netpbm

// Binary PGM (P5). maxval up to 255 reads one byte per pixel, larger maxval
// reads two big-endian bytes; intensities are divided by maxval.
inline ImageRecord load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open image: " + path);
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P5") throw io_error("not a binary PGM (P5) file: " + path);
    int width = netpbm::read_header_int(in, path);
    int height = netpbm::read_header_int(in, path);
    int maxval = netpbm::read_header_int(in, path);
    if (maxval < 1 || maxval > 65535) throw io_error("invalid PGM maxval in " + path);
    in.get(); // single whitespace byte before the raster
    if (width != height)
        throw io_error("image must be square, got " + std::to_string(width) + "x" +
                       std::to_string(height) + " in " + path);

    ImageRecord rec;
    rec.extent = width;
    rec.format = "pgm";
    rec.source_bit_depth = maxval > 255 ? 16 : 8;
    rec.pixels.resize(static_cast<std::size_t>(width) * height);
    int bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(rec.pixels.size() * bytes_per);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw io_error("truncated PGM pixel data in " + path);
    for (std::size_t i = 0; i < rec.pixels.size(); ++i) {
        unsigned v = bytes_per == 1
                         ? raw[i]
                         : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
        if (v > static_cast<unsigned>(maxval))
            throw io_error("PGM sample exceeds maxval in " + path);
        rec.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
    return rec;
}

inline void write_pgm(const std::string& path, const std::vector<float>& pixels, int width,
                      int height) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open image for writing: " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    for (float v : pixels) {
        float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        out.put(static_cast<char>(static_cast<int>(std::lround(clamped * 255.0f))));
    }
    if (!out) throw io_error("short write to image: " + path);
}

// Binary PPM (P6), RGB triples in [0,1].
inline void write_ppm(const std::string& path, const std::vector<float>& rgb, int width,
                      int height) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw shape_error("write_ppm: buffer size does not match extents");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open image for writing: " + path);
    out << "P6\n" << width << " " << height << "\n255\n";
    for (float v : rgb) {
        float clamped = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        out.put(static_cast<char>(static_cast<int>(std::lround(clamped * 255.0f))));
    }
    if (!out) throw io_error("short write to image: " + path);
}

// raw16: little-endian uint16 samples normalized by 65535, extents from a
// text sidecar "<path>.dim" holding "height width".
inline ImageRecord load_raw16(const std::string& path) {
    std::ifstream dim(path + ".dim");
    if (!dim) throw io_error("missing raw16 sidecar: " + path + ".dim");
    int height = 0, width = 0;
    if (!(dim >> height >> width) || height < 1 || width < 1)
        throw io_error("malformed raw16 sidecar: " + path + ".dim");
    if (width != height)
        throw io_error("image must be square, got " + std::to_string(width) + "x" +
                       std::to_string(height) + " in " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open image: " + path);
    std::vector<unsigned char> raw(static_cast<std::size_t>(width) * height * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size())
        throw io_error("truncated raw16 pixel data in " + path);
    in.get();
    if (!in.eof()) throw io_error("trailing bytes in raw16 file " + path);

    ImageRecord rec;
    rec.extent = width;
    rec.format = "raw16";
    rec.source_bit_depth = 16;
    rec.pixels.resize(static_cast<std::size_t>(width) * height);
    for (std::size_t i = 0; i < rec.pixels.size(); ++i) {
        unsigned v = raw[2 * i] | (static_cast<unsigned>(raw[2 * i + 1]) << 8);
        rec.pixels[i] = static_cast<float>(v) / 65535.0f;
    }
    return rec;
}

inline void write_raw16(const std::string& path, const std::vector<std::uint16_t>& samples,
                        int width, int height) {
    std::ofstream dim(path + ".dim", std::ios::trunc);
    dim << height << " " << width << "\n";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open image for writing: " + path);
    for (std::uint16_t v : samples) {
        out.put(static_cast<char>(v & 0xff));
        out.put(static_cast<char>((v >> 8) & 0xff));
    }
    if (!out) throw io_error("short write to image: " + path);
}

template <typename T>
Tensor<T> image_to_tensor(const ImageRecord& rec) {
    Tensor<T> t(1, rec.extent, rec.extent, 1);
    for (std::size_t i = 0; i < rec.pixels.size(); ++i) t.data[i] = static_cast<T>(rec.pixels[i]);
    return t;
}

} // namespace msnn
