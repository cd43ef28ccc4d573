#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/image.hpp"

namespace msnn {

// Deliberately minimal DICOM support: Part-10 files, explicit VR little
// endian, uncompressed MONOCHROME2, defined-length elements only. Everything
// else is rejected with a structured error; the parser never reads past a
// declared length.
struct DicomImage {
    int rows = 0, columns = 0;
    int bits_allocated = 0;       // 8 or 16
    int pixel_representation = 0; // 0 unsigned, 1 two's complement
    std::string photometric;      // MONOCHROME2
    double rescale_slope = 1.0;
    double rescale_intercept = 0.0;
    std::optional<double> window_center, window_width;
    std::vector<int> pixels; // decoded raw values, sign applied
};

namespace dicom_detail {

constexpr const char* kExplicitVrLe = "1.2.840.10008.1.2.1";

struct Cursor {
    const unsigned char* p;
    std::size_t len;
    std::size_t pos = 0;

    bool done() const { return pos >= len; }
    void need(std::size_t n, const char* what) const {
        if (pos + n > len)
            throw io_error(std::string("malformed DICOM: truncated while reading ") + what);
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
};

inline bool long_form_vr(const char vr[2]) {
    auto is = [&](const char* s) { return vr[0] == s[0] && vr[1] == s[1]; };
    return is("OB") || is("OW") || is("OF") || is("SQ") || is("UT") || is("UN");
}

inline std::string trim_padding(std::string s) {
    while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
    return s;
}

// DS values are decimal strings, possibly multi-valued ("40\400"); the first
// component is used.
inline double parse_ds(const std::string& raw, const char* tag) {
    std::string s = trim_padding(raw);
    auto backslash = s.find('\\');
    if (backslash != std::string::npos) s = s.substr(0, backslash);
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str())
        throw io_error(std::string("malformed DICOM: unparseable decimal string in ") + tag);
    return v;
}

} // namespace dicom_detail

inline DicomImage parse_dicom_minimal(const std::vector<unsigned char>& bytes) {
    using namespace dicom_detail;
    if (bytes.size() < 132) throw io_error("malformed DICOM: shorter than the Part-10 preamble");
    if (!(bytes[128] == 'D' && bytes[129] == 'I' && bytes[130] == 'C' && bytes[131] == 'M'))
        throw io_error("malformed DICOM: missing DICM marker after preamble");

    Cursor cur{bytes.data(), bytes.size(), 132};
    DicomImage img;
    bool have_rows = false, have_cols = false, have_bits = false, have_repr = false,
         have_photo = false;
    const unsigned char* pixel_data = nullptr;
    std::uint32_t pixel_len = 0;

    while (!cur.done()) {
        std::uint16_t group = cur.u16("element tag");
        std::uint16_t element = cur.u16("element tag");
        cur.need(2, "value representation");
        char vr[2] = {static_cast<char>(cur.p[cur.pos]), static_cast<char>(cur.p[cur.pos + 1])};
        cur.pos += 2;
        if (vr[0] < 'A' || vr[0] > 'Z' || vr[1] < 'A' || vr[1] > 'Z')
            throw io_error("malformed DICOM: invalid value representation (implicit VR or "
                           "corrupt stream)");
        std::uint32_t length;
        if (long_form_vr(vr)) {
            cur.u16("reserved bytes");
            length = cur.u32("element length");
        } else {
            length = cur.u16("element length");
        }
        if (length == 0xFFFFFFFFu)
            throw io_error("malformed DICOM: undefined element lengths are not supported");
        cur.need(length, "element value");
        const unsigned char* value = cur.p + cur.pos;

        auto as_u16 = [&](const char* what) -> int {
            if (length != 2)
                throw io_error(std::string("malformed DICOM: bad length for ") + what);
            return value[0] | (value[1] << 8);
        };
        auto as_string = [&] { return std::string(reinterpret_cast<const char*>(value), length); };

        if (group == 0x0002 && element == 0x0010) {
            std::string ts = trim_padding(as_string());
            if (ts != kExplicitVrLe)
                throw io_error("unsupported DICOM transfer syntax '" + ts +
                               "' (only uncompressed explicit VR little endian)");
        } else if (group == 0x0028 && element == 0x0010) {
            img.rows = as_u16("Rows");
            have_rows = true;
        } else if (group == 0x0028 && element == 0x0011) {
            img.columns = as_u16("Columns");
            have_cols = true;
        } else if (group == 0x0028 && element == 0x0100) {
            img.bits_allocated = as_u16("BitsAllocated");
            have_bits = true;
        } else if (group == 0x0028 && element == 0x0103) {
            img.pixel_representation = as_u16("PixelRepresentation");
            have_repr = true;
        } else if (group == 0x0028 && element == 0x0004) {
            img.photometric = trim_padding(as_string());
            have_photo = true;
        } else if (group == 0x0028 && element == 0x1052) {
            img.rescale_intercept = parse_ds(as_string(), "RescaleIntercept");
        } else if (group == 0x0028 && element == 0x1053) {
            img.rescale_slope = parse_ds(as_string(), "RescaleSlope");
        } else if (group == 0x0028 && element == 0x1050) {
            img.window_center = parse_ds(as_string(), "WindowCenter");
        } else if (group == 0x0028 && element == 0x1051) {
            img.window_width = parse_ds(as_string(), "WindowWidth");
        } else if (group == 0x7FE0 && element == 0x0010) {
            pixel_data = value;
            pixel_len = length;
        }
        // unknown tags are skipped by their declared length
        cur.pos += length;
    }

    if (!have_rows) throw io_error("malformed DICOM: missing Rows (0028,0010)");
    if (!have_cols) throw io_error("malformed DICOM: missing Columns (0028,0011)");
    if (!have_bits) throw io_error("malformed DICOM: missing BitsAllocated (0028,0100)");
    if (!have_repr) throw io_error("malformed DICOM: missing PixelRepresentation (0028,0103)");
    if (!have_photo)
        throw io_error("malformed DICOM: missing PhotometricInterpretation (0028,0004)");
    if (!pixel_data) throw io_error("malformed DICOM: missing PixelData (7FE0,0010)");

    if (img.photometric != "MONOCHROME2")
        throw io_error("unsupported DICOM photometric interpretation '" + img.photometric +
                       "' (only MONOCHROME2; MONOCHROME1 is rejected, not inverted)");
    if (img.bits_allocated != 8 && img.bits_allocated != 16)
        throw io_error("unsupported DICOM BitsAllocated " + std::to_string(img.bits_allocated));
    if (img.pixel_representation != 0 && img.pixel_representation != 1)
        throw io_error("malformed DICOM: PixelRepresentation must be 0 or 1");
    if (img.rows < 1 || img.columns < 1)
        throw io_error("malformed DICOM: non-positive image extents");

    std::size_t expect =
        static_cast<std::size_t>(img.rows) * img.columns * (img.bits_allocated / 8);
    if (pixel_len != expect)
        throw io_error("malformed DICOM: PixelData length " + std::to_string(pixel_len) +
                       " does not match Rows*Columns*BitsAllocated/8 = " +
                       std::to_string(expect));

    img.pixels.resize(static_cast<std::size_t>(img.rows) * img.columns);
    if (img.bits_allocated == 8) {
        for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = pixel_data[i];
    } else {
        for (std::size_t i = 0; i < img.pixels.size(); ++i) {
            std::uint16_t v = static_cast<std::uint16_t>(pixel_data[2 * i] |
                                                         (pixel_data[2 * i + 1] << 8));
            img.pixels[i] = img.pixel_representation == 1
                                ? static_cast<int>(static_cast<std::int16_t>(v))
                                : static_cast<int>(v);
        }
    }
    return img;
}

inline DicomImage load_dicom(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open DICOM file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return parse_dicom_minimal(bytes);
}

// Standard CT display pipeline: rescale to Hounsfield units, then a
// clamp-linear window map. Values at or below center-width/2 become 0, at or
// above center+width/2 become 1.
inline float window_to_unit(int raw, double slope, double intercept, double center,
                            double width) {
    if (width <= 0) throw shape_error("window_to_unit: width must be positive");
    double hu = slope * raw + intercept;
    double lo = center - width / 2.0;
    if (hu <= lo) return 0.0f;
    if (hu >= lo + width) return 1.0f;
    return static_cast<float>((hu - lo) / width);
}

struct WindowChoice {
    double center = 40.0, width = 400.0; // soft-tissue default
    bool from_tags = false;
};

// Window from the file's tags when present, else the soft-tissue default
// (40/400); callers may force e.g. the lung window (-600/1500).
inline ImageRecord dicom_to_image(const DicomImage& img,
                                  std::optional<WindowChoice> forced = std::nullopt) {
    if (img.rows != img.columns)
        throw io_error("image must be square, got " + std::to_string(img.columns) + "x" +
                       std::to_string(img.rows));
    WindowChoice window;
    if (forced) {
        window = *forced;
    } else if (img.window_center && img.window_width) {
        window = {*img.window_center, *img.window_width, true};
    }
    ImageRecord rec;
    rec.extent = img.rows;
    rec.format = "dicom";
    rec.source_bit_depth = img.bits_allocated;
    rec.window_note = "center=" + std::to_string(window.center) +
                      " width=" + std::to_string(window.width) +
                      (window.from_tags ? " (from tags)" : " (convention)");
    rec.pixels.resize(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        rec.pixels[i] = window_to_unit(img.pixels[i], img.rescale_slope, img.rescale_intercept,
                                       window.center, window.width);
    return rec;
}

} // namespace msnn
