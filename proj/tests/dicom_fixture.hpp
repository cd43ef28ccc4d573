// Reference DICOM writer for test fixtures. Written against the standard's
// explicit-VR-little-endian encoding rules, independently of the parser it is
// used to check.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fixture {

class DicomBuilder {
public:
    DicomBuilder() {
        bytes_.assign(128, 0); // Part-10 preamble
        bytes_.push_back('D');
        bytes_.push_back('I');
        bytes_.push_back('C');
        bytes_.push_back('M');
    }

    DicomBuilder& transfer_syntax(const std::string& uid) {
        std::string padded = uid;
        if (padded.size() % 2) padded.push_back('\0'); // UI pads with NUL
        element_short(0x0002, 0x0010, "UI", padded.data(), padded.size());
        return *this;
    }

    DicomBuilder& us(std::uint16_t group, std::uint16_t element, std::uint16_t value) {
        unsigned char payload[2] = {static_cast<unsigned char>(value & 0xff),
                                    static_cast<unsigned char>(value >> 8)};
        element_short(group, element, "US", payload, 2);
        return *this;
    }

    DicomBuilder& str(std::uint16_t group, std::uint16_t element, const char* vr,
                      std::string value) {
        if (value.size() % 2) value.push_back(' '); // CS/DS pad with space
        element_short(group, element, vr, value.data(), value.size());
        return *this;
    }

    DicomBuilder& pixel_data_ow(const std::vector<std::uint16_t>& samples) {
        std::vector<unsigned char> payload;
        for (std::uint16_t v : samples) {
            payload.push_back(static_cast<unsigned char>(v & 0xff));
            payload.push_back(static_cast<unsigned char>(v >> 8));
        }
        element_long(0x7FE0, 0x0010, "OW", payload.data(), payload.size());
        return *this;
    }

    DicomBuilder& pixel_data_ob(const std::vector<std::uint8_t>& samples) {
        element_long(0x7FE0, 0x0010, "OB", samples.data(), samples.size());
        return *this;
    }

    // arbitrary element, for exercising the skip-unknown-tags path
    DicomBuilder& unknown_short(std::uint16_t group, std::uint16_t element,
                                const std::string& text) {
        std::string value = text;
        if (value.size() % 2) value.push_back(' ');
        element_short(group, element, "LO", value.data(), value.size());
        return *this;
    }

    std::vector<unsigned char> build() const { return bytes_; }

private:
    void tag(std::uint16_t group, std::uint16_t element) {
        u16(group);
        u16(element);
    }
    void u16(std::uint16_t v) {
        bytes_.push_back(static_cast<unsigned char>(v & 0xff));
        bytes_.push_back(static_cast<unsigned char>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            bytes_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    }
    void element_short(std::uint16_t group, std::uint16_t element, const char* vr,
                       const void* payload, std::size_t len) {
        tag(group, element);
        bytes_.push_back(static_cast<unsigned char>(vr[0]));
        bytes_.push_back(static_cast<unsigned char>(vr[1]));
        u16(static_cast<std::uint16_t>(len));
        append(payload, len);
    }
    void element_long(std::uint16_t group, std::uint16_t element, const char* vr,
                      const void* payload, std::size_t len) {
        tag(group, element);
        bytes_.push_back(static_cast<unsigned char>(vr[0]));
        bytes_.push_back(static_cast<unsigned char>(vr[1]));
        u16(0); // reserved
        u32(static_cast<std::uint32_t>(len));
        append(payload, len);
    }
    void append(const void* payload, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(payload);
        bytes_.insert(bytes_.end(), p, p + len);
    }

    std::vector<unsigned char> bytes_;
};

// The canonical 4x4 16-bit CT-like fixture: signed pixels, slope 1,
// intercept -1024, explicit soft-tissue window tags.
inline std::vector<unsigned char> ct_fixture_4x4(std::vector<std::uint16_t>* out_samples = nullptr) {
    std::vector<std::uint16_t> samples;
    for (int i = 0; i < 16; ++i)
        samples.push_back(static_cast<std::uint16_t>(1000 + 30 * i)); // raw values
    if (out_samples) *out_samples = samples;
    return DicomBuilder()
        .transfer_syntax("1.2.840.10008.1.2.1")
        .str(0x0028, 0x0004, "CS", "MONOCHROME2")
        .us(0x0028, 0x0010, 4)  // Rows
        .us(0x0028, 0x0011, 4)  // Columns
        .us(0x0028, 0x0100, 16) // BitsAllocated
        .us(0x0028, 0x0103, 1)  // PixelRepresentation: signed
        .str(0x0028, 0x1052, "DS", "-1024")
        .str(0x0028, 0x1053, "DS", "1")
        .str(0x0028, 0x1050, "DS", "40\\400") // multi-valued on purpose
        .str(0x0028, 0x1051, "DS", "400")
        .unknown_short(0x0010, 0x0010, "ANONYMIZED") // PatientName, skipped by length
        .pixel_data_ow(samples)
        .build();
}

} // namespace fixture
