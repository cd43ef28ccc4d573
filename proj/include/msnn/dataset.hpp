#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "msnn/dicom.hpp"
#include "msnn/error.hpp"
#include "msnn/image.hpp"
#include "msnn/rng.hpp"

namespace msnn {

constexpr int kNonCancerous = 0;
constexpr int kCancerous = 1;

inline std::string label_name(int label) { return label == 1 ? "cancerous" : "non_cancerous"; }

inline int label_from_string(const std::string& s, std::size_t row) {
    if (s == "cancerous") return kCancerous;
    if (s == "non_cancerous") return kNonCancerous;
    throw io_error("unknown label '" + s + "' at manifest row " + std::to_string(row) +
                   " (expected cancerous or non_cancerous)");
}

struct ManifestRow {
    std::string path; // relative to the manifest's directory
    int label = 0;
    std::string patient_id;
};

struct Manifest {
    std::string root; // directory the relative paths resolve against
    std::vector<ManifestRow> rows;

    long count(int label) const {
        long n = 0;
        for (const auto& r : rows) n += r.label == label ? 1 : 0;
        return n;
    }
    std::string resolve(std::size_t i) const {
        std::filesystem::path p(rows[i].path);
        if (p.is_absolute()) return p.string();
        return (std::filesystem::path(root) / p).string();
    }
};

// CSV with header path,label[,patient_id]. Rows are validated and files must
// exist on disk.
inline Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest: " + path);
    Manifest m;
    m.root = std::filesystem::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";
    std::string line;
    if (!std::getline(in, line)) throw io_error("empty manifest: " + path);
    if (line.size() && line.back() == '\r') line.pop_back();
    bool has_patient = false;
    if (line == "path,label,patient_id")
        has_patient = true;
    else if (line != "path,label")
        throw io_error("manifest header must be 'path,label[,patient_id]', got '" + line + "'");
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        ManifestRow row;
        std::string label;
        if (!std::getline(ss, row.path, ',') || !std::getline(ss, label, ','))
            throw io_error("malformed manifest row " + std::to_string(row_no) + " in " + path);
        if (has_patient) std::getline(ss, row.patient_id, ',');
        row.label = label_from_string(label, row_no);
        m.rows.push_back(std::move(row));
        if (!std::filesystem::exists(m.resolve(m.rows.size() - 1)))
            throw io_error("manifest row " + std::to_string(row_no) + " names a missing file: " +
                           m.resolve(m.rows.size() - 1));
    }
    if (m.rows.empty()) throw io_error("manifest has no data rows: " + path);
    return m;
}

inline void save_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot write manifest: " + path);
    out << "path,label,patient_id\n";
    for (const auto& r : m.rows)
        out << r.path << "," << label_name(r.label) << "," << r.patient_id << "\n";
}

enum class ImageFormat { Pgm, Raw16, Dicom };

inline ImageFormat format_from_path(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".pgm") return ImageFormat::Pgm;
    if (ext == ".raw16" || ext == ".raw") return ImageFormat::Raw16;
    if (ext == ".dcm" || ext == ".dicom") return ImageFormat::Dicom;
    throw io_error("cannot infer image format from extension '" + ext + "' of " + path);
}

inline ImageRecord load_image(const std::string& path, ImageFormat format,
                              std::optional<WindowChoice> window = std::nullopt) {
    switch (format) {
        case ImageFormat::Pgm: return load_pgm(path);
        case ImageFormat::Raw16: return load_raw16(path);
        case ImageFormat::Dicom: return dicom_to_image(load_dicom(path), window);
    }
    throw io_error("unknown image format");
}

inline ImageRecord load_image(const std::string& path) {
    return load_image(path, format_from_path(path));
}

// The whole corpus in memory, parallel to the manifest rows.
struct Dataset {
    std::vector<ImageRecord> images;
    std::vector<int> labels;
    std::vector<std::string> ids; // manifest-relative paths
};

inline Dataset load_dataset(const Manifest& m,
                            std::optional<WindowChoice> window = std::nullopt) {
    Dataset ds;
    ds.images.reserve(m.rows.size());
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        ds.images.push_back(load_image(m.resolve(i), format_from_path(m.rows[i].path), window));
        ds.labels.push_back(m.rows[i].label);
        ds.ids.push_back(m.rows[i].path);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic corpus. The hospital data is private, so desk-scale runs use
// generated images: negatives are smoothed-noise "lung fields", positives add
// one to three bright Gaussian blobs at recorded centers. Everything is
// deterministic per seed, which the localization and determinism acceptance
// checks rely on.

struct BlobSpot {
    double y = 0, x = 0, sigma = 0, amplitude = 0;
};

struct SyntheticParams {
    int count_pos = 100;
    int count_neg = 100;
    int extent = 64;
    std::uint64_t seed = 1;
    double sigma_lo_frac = 1.0 / 16.0; // blob radius, fraction of extent
    double sigma_hi_frac = 1.0 / 10.0;
    double amplitude_lo = 0.30; // blob contrast over the base field
    double amplitude_hi = 0.45;
    int max_blobs = 3;
};

struct SyntheticDataset {
    Manifest manifest;
    std::map<std::string, std::vector<BlobSpot>> blob_truth; // keyed by relative path
};

namespace synth_detail {

inline void box_blur(std::vector<float>& img, int extent, int radius) {
    std::vector<float> tmp(img.size());
    // horizontal then vertical, sliding window sums
    for (int y = 0; y < extent; ++y) {
        for (int x = 0; x < extent; ++x) {
            double acc = 0;
            int n = 0;
            for (int k = -radius; k <= radius; ++k) {
                int xx = x + k;
                if (xx < 0 || xx >= extent) continue;
                acc += img[static_cast<std::size_t>(y) * extent + xx];
                ++n;
            }
            tmp[static_cast<std::size_t>(y) * extent + x] = static_cast<float>(acc / n);
        }
    }
    for (int y = 0; y < extent; ++y) {
        for (int x = 0; x < extent; ++x) {
            double acc = 0;
            int n = 0;
            for (int k = -radius; k <= radius; ++k) {
                int yy = y + k;
                if (yy < 0 || yy >= extent) continue;
                acc += tmp[static_cast<std::size_t>(yy) * extent + x];
                ++n;
            }
            img[static_cast<std::size_t>(y) * extent + x] = static_cast<float>(acc / n);
        }
    }
}

inline std::vector<float> base_field(int extent, Rng& rng) {
    std::vector<float> img(static_cast<std::size_t>(extent) * extent);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    box_blur(img, extent, std::max(1, extent / 16));
    box_blur(img, extent, std::max(1, extent / 16));
    float lo = img[0], hi = img[0];
    for (float v : img) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (auto& v : img)
        v = hi > lo ? 0.35f + 0.30f * (v - lo) / (hi - lo) : 0.5f;
    return img;
}

inline std::string image_name(bool positive, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d.pgm", positive ? "pos" : "neg", index);
    return std::string("images/") + buf;
}

} // namespace synth_detail

inline SyntheticDataset generate_synthetic(const SyntheticParams& params,
                                           const std::string& out_dir) {
    if (params.extent < 32 || params.extent % 32 != 0)
        throw shape_error("synthetic extent " + std::to_string(params.extent) +
                          " is not divisible by 32");
    if (params.count_pos < 0 || params.count_neg < 0)
        throw shape_error("synthetic image counts must be non-negative");
    std::filesystem::create_directories(std::filesystem::path(out_dir) / "images");

    SyntheticDataset out;
    out.manifest.root = out_dir;
    int e = params.extent;

    auto emit = [&](bool positive, int index) {
        Rng rng(params.seed, (positive ? (1ull << 20) : (2ull << 20)) + index);
        auto img = synth_detail::base_field(e, rng);
        std::string rel = synth_detail::image_name(positive, index);
        std::vector<BlobSpot> blobs;
        if (positive) {
            int count = 1 + static_cast<int>(rng.below(params.max_blobs));
            for (int bi = 0; bi < count; ++bi) {
                BlobSpot blob;
                blob.y = rng.uniform(0.15 * e, 0.85 * e);
                blob.x = rng.uniform(0.15 * e, 0.85 * e);
                blob.sigma = rng.uniform(params.sigma_lo_frac * e, params.sigma_hi_frac * e);
                blob.amplitude = rng.uniform(params.amplitude_lo, params.amplitude_hi);
                for (int y = 0; y < e; ++y)
                    for (int x = 0; x < e; ++x) {
                        double d2 = (y - blob.y) * (y - blob.y) + (x - blob.x) * (x - blob.x);
                        double bump = blob.amplitude *
                                      std::exp(-d2 / (2.0 * blob.sigma * blob.sigma));
                        float& px = img[static_cast<std::size_t>(y) * e + x];
                        px = std::min(1.0f, px + static_cast<float>(bump));
                    }
                blobs.push_back(blob);
            }
        }
        write_pgm((std::filesystem::path(out_dir) / rel).string(), img, e, e);
        ManifestRow row;
        row.path = rel;
        row.label = positive ? kCancerous : kNonCancerous;
        char pid[24];
        std::snprintf(pid, sizeof(pid), "synth-%c%04d", positive ? 'p' : 'n', index);
        row.patient_id = pid;
        out.manifest.rows.push_back(std::move(row));
        if (positive) out.blob_truth[rel] = std::move(blobs);
    };

    for (int i = 0; i < params.count_pos; ++i) emit(true, i);
    for (int i = 0; i < params.count_neg; ++i) emit(false, i);

    save_manifest(out.manifest, (std::filesystem::path(out_dir) / "manifest.csv").string());

    nlohmann::json truth;
    truth["seed"] = params.seed;
    truth["extent"] = params.extent;
    truth["images"] = nlohmann::json::array();
    for (const auto& [rel, blobs] : out.blob_truth) {
        nlohmann::json entry;
        entry["path"] = rel;
        entry["blobs"] = nlohmann::json::array();
        for (const auto& b : blobs)
            entry["blobs"].push_back(
                {{"y", b.y}, {"x", b.x}, {"sigma", b.sigma}, {"amplitude", b.amplitude}});
        truth["images"].push_back(entry);
    }
    std::ofstream jf((std::filesystem::path(out_dir) / "blobs.json").string(), std::ios::trunc);
    jf << truth.dump(2) << "\n";

    return out;
}

inline std::map<std::string, std::vector<BlobSpot>> load_blob_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open blob truth: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("malformed blob truth " + path + ": " + e.what());
    }
    std::map<std::string, std::vector<BlobSpot>> truth;
    for (const auto& entry : j.at("images")) {
        std::vector<BlobSpot> blobs;
        for (const auto& b : entry.at("blobs"))
            blobs.push_back({b.at("y").get<double>(), b.at("x").get<double>(),
                             b.at("sigma").get<double>(), b.at("amplitude").get<double>()});
        truth[entry.at("path").get<std::string>()] = std::move(blobs);
    }
    return truth;
}

} // namespace msnn
