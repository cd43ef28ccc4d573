// msnn: train / evaluate / explain the MSNN lung-CT classifier.
//
// Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
// failure (non-finite loss).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "msnn/msnn.hpp"

namespace fs = std::filesystem;

#ifdef MSNN_DOUBLE_PRECISION
using scalar = double;
#else
using scalar = float;
#endif

namespace {

std::string stem_of(const std::string& path) {
    fs::path p(path);
    return (p.parent_path() / p.stem()).string();
}

// One per invocation: what ran, with what configuration, what it produced.
struct RunRecord {
    std::string subcommand;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::pair<std::string, std::uint64_t>> outputs; // path, fnv1a64
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void add_output(const std::string& path) {
        outputs.emplace_back(path, msnn::checksum_file(path));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["subcommand"] = subcommand;
        j["config"] = config;
        j["seed"] = seed;
        j["inputs"] = inputs;
        j["outputs"] = nlohmann::json::array();
        for (const auto& [path, sum] : outputs) {
            char hex[24];
            std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(sum));
            j["outputs"].push_back({{"path", path}, {"fnv1a64", hex}});
        }
        auto elapsed = std::chrono::steady_clock::now() - started;
        j["wall_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
        return j;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw msnn::io_error("cannot write run record: " + path);
        out << to_json().dump(2) << "\n";
    }
};

struct CommonOpts {
    int threads = 0;
    std::string run_record; // override for the record path
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--threads", opts.threads,
                    "worker thread cap (default: MSNN_THREADS or hardware)")
        ->check(CLI::Range(1, 1024));
    cmd->add_option("--run-record", opts.run_record, "run record path override");
}

void apply_threads(const CommonOpts& opts) {
    if (opts.threads > 0) msnn::set_max_threads(opts.threads);
}

const std::map<std::string, msnn::LossKind> kLossNames = {
    {"mse", msnn::LossKind::Mse}, {"cross_entropy", msnn::LossKind::CrossEntropy}};

std::string open_fraction_check(const std::string& value) {
    try {
        double v = std::stod(value);
        if (v > 0.0 && v < 1.0) return {};
    } catch (...) {
    }
    return "fraction must lie strictly between 0 and 1";
}

std::optional<msnn::WindowChoice> window_from_flag(const std::string& flag) {
    if (flag.empty() || flag == "auto") return std::nullopt; // tags, else soft-tissue default
    if (flag == "soft") return msnn::WindowChoice{40.0, 400.0, false};
    if (flag == "lung") return msnn::WindowChoice{-600.0, 1500.0, false};
    auto comma = flag.find(',');
    if (comma != std::string::npos) {
        try {
            double c = std::stod(flag.substr(0, comma));
            double w = std::stod(flag.substr(comma + 1));
            if (w > 0) return msnn::WindowChoice{c, w, false};
        } catch (...) {
        }
    }
    throw CLI::ValidationError("--window", "expected auto, soft, lung or <center>,<width>");
}

msnn::Tensor<scalar> load_single_image(const std::string& path, const std::string& format_flag,
                                       const std::string& window_flag) {
    msnn::ImageFormat format = format_flag.empty() ? msnn::format_from_path(path)
                               : format_flag == "pgm"   ? msnn::ImageFormat::Pgm
                               : format_flag == "raw16" ? msnn::ImageFormat::Raw16
                                                        : msnn::ImageFormat::Dicom;
    auto rec = msnn::load_image(path, format, window_from_flag(window_flag));
    return msnn::image_to_tensor<scalar>(rec);
}

// ---------------------------------------------------------------------- synth

int run_synth(const std::string& out_dir, msnn::SyntheticParams params, CommonOpts& common) {
    RunRecord record;
    record.subcommand = "synth";
    record.seed = params.seed;
    record.config = {{"pos", params.count_pos},   {"neg", params.count_neg},
                     {"extent", params.extent},   {"sigma_lo_frac", params.sigma_lo_frac},
                     {"sigma_hi_frac", params.sigma_hi_frac},
                     {"amplitude_lo", params.amplitude_lo},
                     {"amplitude_hi", params.amplitude_hi},
                     {"max_blobs", params.max_blobs}};
    auto ds = msnn::generate_synthetic(params, out_dir);
    record.add_output((fs::path(out_dir) / "manifest.csv").string());
    record.add_output((fs::path(out_dir) / "blobs.json").string());
    std::printf("wrote %zu images (%d cancerous, %d non-cancerous) under %s\n",
                ds.manifest.rows.size(), params.count_pos, params.count_neg, out_dir.c_str());
    std::string rec_path = common.run_record.empty()
                               ? (fs::path(out_dir) / "run_record.json").string()
                               : common.run_record;
    record.save(rec_path);
    return 0;
}

// ---------------------------------------------------------------------- train

struct TrainArgs {
    std::string manifest, out;
    std::string curves, plan_out;
    double split = 0.70;
    std::uint64_t seed = 1;
    int epochs = 20, batch = 20, extent = 512, val_every = 10;
    double lr = 1e-3;
    std::string loss = "mse";
    std::string window;
};

int run_train(const TrainArgs& args, CommonOpts& common) {
    RunRecord record;
    record.subcommand = "train";
    record.seed = args.seed;
    record.inputs = {args.manifest};
    record.config = {{"split", args.split}, {"epochs", args.epochs}, {"batch", args.batch},
                     {"lr", args.lr},       {"loss", args.loss},     {"extent", args.extent},
                     {"val_every", args.val_every}};

    auto manifest = msnn::load_manifest(args.manifest);
    std::printf("manifest: %zu rows (%ld cancerous, %ld non-cancerous)\n", manifest.rows.size(),
                manifest.count(msnn::kCancerous), manifest.count(msnn::kNonCancerous));
    auto data = msnn::load_dataset(manifest, window_from_flag(args.window));
    auto plan = msnn::split_dataset(manifest, args.split, args.seed);

    msnn::TrainConfig cfg;
    cfg.batch_size = args.batch;
    cfg.epochs = args.epochs;
    cfg.learning_rate = args.lr;
    cfg.loss = kLossNames.at(args.loss);
    cfg.seed = args.seed;
    cfg.split_fraction = args.split;
    cfg.val_every = args.val_every;

    auto net = msnn::Network<scalar>::init(msnn::build_msnn(args.extent), args.seed);
    net.init_seed = args.seed;
    auto curves = msnn::train(net, data, plan, cfg);

    msnn::save_checkpoint(net, args.out);
    std::string curves_path = args.curves.empty() ? stem_of(args.out) + "_curves.csv"
                                                  : args.curves;
    std::string plan_path = args.plan_out.empty() ? stem_of(args.out) + "_split.json"
                                                  : args.plan_out;
    curves.save_csv(curves_path);
    plan.save(plan_path);
    record.add_output(args.out);
    record.add_output(curves_path);
    record.add_output(plan_path);

    const auto& last = curves.points.back();
    std::printf("trained %d epochs (%ld iterations), final train acc %.1f%%, loss %.6g\n",
                args.epochs, last.iteration, last.train_acc, last.train_loss);
    for (auto it = curves.points.rbegin(); it != curves.points.rend(); ++it) {
        if (it->val_acc) {
            std::printf("last validation: acc %.1f%%, loss %.6g (iteration %ld)\n", *it->val_acc,
                        *it->val_loss, it->iteration);
            break;
        }
    }
    record.save(common.run_record.empty() ? stem_of(args.out) + "_run.json"
                                          : common.run_record);
    return 0;
}

// ----------------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint, manifest, plan, out;
    std::string head = "both";
    int k = 3;
    bool allow_even_k = false;
    std::string window;
};

nlohmann::json metrics_json(const msnn::ConfusionMatrix& cm, const msnn::MetricsReport& m,
                            double auc) {
    auto opt = [](const std::optional<double>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    return {{"confusion", {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}}},
            {"accuracy", opt(m.accuracy)},
            {"sensitivity", opt(m.recall)},
            {"precision", opt(m.precision)},
            {"f_score", opt(m.f_score)},
            {"specificity", opt(m.specificity)},
            {"auc", auc}};
}

void print_metrics_row(const std::string& head, const msnn::MetricsReport& m) {
    std::printf("%-12s %-9s %-12s %-10s %-8s %-11s\n", head.c_str(),
                msnn::percent_str(m.accuracy).c_str(), msnn::percent_str(m.recall).c_str(),
                msnn::percent_str(m.precision).c_str(), msnn::percent_str(m.f_score).c_str(),
                msnn::percent_str(m.specificity).c_str());
}

void save_roc_csv(const msnn::RocCurve& roc, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw msnn::io_error("cannot write ROC curve: " + path);
    out << "threshold,fpr,tpr\n";
    char buf[96];
    for (const auto& p : roc.points) {
        if (std::isinf(p.threshold))
            std::snprintf(buf, sizeof(buf), "inf,%.9g,%.9g", p.fpr, p.tpr);
        else
            std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g", p.threshold, p.fpr, p.tpr);
        out << buf << "\n";
    }
}

int run_eval(const EvalArgs& args, CommonOpts& common) {
    if (args.plan.empty())
        throw msnn::io_error(
            "eval needs the training split plan; pass --split-plan <file> "
            "(written by `msnn train` next to the checkpoint)");
    RunRecord record;
    record.subcommand = "eval";
    record.inputs = {args.checkpoint, args.manifest, args.plan};
    record.config = {{"head", args.head}, {"k", args.k}};

    auto net = msnn::load_checkpoint<scalar>(args.checkpoint);
    record.seed = net.init_seed;
    auto manifest = msnn::load_manifest(args.manifest);
    auto data = msnn::load_dataset(manifest, window_from_flag(args.window));
    auto plan = msnn::SplitPlan::load(args.plan);
    auto test_idx = plan.test_indices();
    auto train_idx = plan.train_indices();
    for (int idx : test_idx)
        if (idx < 0 || idx >= static_cast<int>(data.labels.size()))
            throw msnn::io_error("split plan indexes row " + std::to_string(idx) +
                                 ", beyond the manifest");
    std::vector<int> test_labels;
    for (int idx : test_idx) test_labels.push_back(data.labels[idx]);

    nlohmann::json report;
    report["checkpoint"] = args.checkpoint;
    report["split_plan"] = args.plan;
    report["k"] = args.k;
    report["heads"] = nlohmann::json::object();

    std::printf("%-12s %-9s %-12s %-10s %-8s %-11s\n", "Head", "Accuracy", "Sensitivity",
                "Precision", "F-Score", "Specificity");

    if (args.head == "softmax" || args.head == "both") {
        auto out = msnn::evaluate_split(net, data, test_idx, msnn::LossKind::Mse, 20);
        auto cm = msnn::confusion(out.predictions, test_labels);
        auto m = msnn::metrics(cm);
        auto roc = msnn::roc_auc(out.scores, test_labels);
        print_metrics_row("softmax", m);
        report["heads"]["softmax"] = metrics_json(cm, m, roc.auc);
        std::string roc_path = stem_of(args.out) + "_roc_softmax.csv";
        save_roc_csv(roc, roc_path);
        record.outputs.emplace_back(roc_path, msnn::checksum_file(roc_path));
    }

    if (args.head == "knn" || args.head == "both") {
        auto collect = [&](const std::vector<int>& rows) {
            std::vector<msnn::Tensor<scalar>> images;
            std::vector<std::string> ids;
            std::vector<int> labels;
            for (int idx : rows) {
                images.push_back(msnn::image_to_tensor<scalar>(data.images[idx]));
                ids.push_back(data.ids[idx]);
                labels.push_back(data.labels[idx]);
            }
            return std::tuple(std::move(images), std::move(ids), std::move(labels));
        };
        auto [train_images, train_ids, train_labels] = collect(train_idx);
        auto [test_images, test_ids, test_labels2] = collect(test_idx);
        auto train_feats = msnn::extract_features(net, train_images, train_ids);
        auto test_feats = msnn::extract_features(net, test_images, test_ids);
        std::vector<std::vector<float>> train_rows;
        for (auto& f : train_feats) train_rows.push_back(f.values);
        msnn::KnnModel knn(train_rows, train_labels, args.k, args.allow_even_k);
        std::vector<int> preds;
        std::vector<double> scores;
        for (const auto& f : test_feats) {
            auto p = knn.predict(f.values);
            preds.push_back(p.label);
            scores.push_back(p.positive_fraction);
        }
        auto cm = msnn::confusion(preds, test_labels2);
        auto m = msnn::metrics(cm);
        auto roc = msnn::roc_auc(scores, test_labels2);
        print_metrics_row("knn (k=" + std::to_string(args.k) + ")", m);
        report["heads"]["knn"] = metrics_json(cm, m, roc.auc);
        std::string roc_path = stem_of(args.out) + "_roc_knn.csv";
        save_roc_csv(roc, roc_path);
        record.outputs.emplace_back(roc_path, msnn::checksum_file(roc_path));
    }

    std::ofstream out(args.out, std::ios::trunc);
    if (!out) throw msnn::io_error("cannot write report: " + args.out);
    out << report.dump(2) << "\n";
    out.close();
    record.add_output(args.out);
    record.save(common.run_record.empty() ? stem_of(args.out) + "_run.json"
                                          : common.run_record);
    return 0;
}

// -------------------------------------------------------------------- explain

struct ExplainArgs {
    std::string checkpoint, image, out, map_out;
    std::string format, window;
    std::string target = "predicted";
    int mask_size = 0, stride = 0; // 0 = extent-derived defaults
    double gray = 0.5;
    double alpha = 0.4;
};

int run_explain(const ExplainArgs& args, CommonOpts& common) {
    RunRecord record;
    record.subcommand = "explain";
    record.inputs = {args.checkpoint, args.image};
    record.config = {{"mask_size", args.mask_size}, {"stride", args.stride},
                     {"gray", args.gray},           {"target", args.target},
                     {"alpha", args.alpha}};

    auto net = msnn::load_checkpoint<scalar>(args.checkpoint);
    record.seed = net.init_seed;
    auto image = load_single_image(args.image, args.format, args.window);

    auto base = net.forward(image);
    double p_non = base(0, 0, 0, msnn::kNonCancerous);
    double p_can = base(0, 0, 0, msnn::kCancerous);
    std::printf("%s\n", msnn::caption_line(p_can, p_non).c_str());

    int target = args.target == "cancerous"       ? msnn::kCancerous
                 : args.target == "non_cancerous" ? msnn::kNonCancerous
                                                  : (p_can >= p_non ? 1 : 0);

    auto cfg = msnn::OcclusionConfig::defaults_for(net.spec.input_extent);
    if (args.mask_size > 0) {
        cfg.mask_size = args.mask_size;
        cfg.stride = std::max(1, args.mask_size / 2);
    }
    if (args.stride > 0) cfg.stride = args.stride;
    cfg.mask_value = static_cast<float>(args.gray);

    auto map = msnn::occlusion_map(net, image, target, cfg, args.image);
    auto raster = msnn::overlay(image, map, static_cast<float>(args.alpha));
    msnn::write_ppm(args.out, raster.rgb, raster.width, raster.height);
    std::string map_path = args.map_out.empty() ? stem_of(args.out) + "_map.csv" : args.map_out;
    map.save_csv(map_path);

    auto [ay, ax] = map.argmax_cell();
    auto [cy, cx] = map.cell_center(ay, ax);
    std::printf("sensitivity map %dx%d (mask %d, stride %d, gray %.2f), target %s\n", map.grid_h,
                map.grid_w, cfg.mask_size, cfg.stride, cfg.mask_value,
                msnn::label_name(target).c_str());
    std::printf("strongest cell (%d,%d) centered at pixel (%.0f,%.0f); positive delta means "
                "the region supports the classification\n",
                ay, ax, cy, cx);

    record.config["caption"] = msnn::caption_line(p_can, p_non);
    record.add_output(args.out);
    record.add_output(map_path);
    record.save(common.run_record.empty() ? stem_of(args.out) + "_run.json"
                                          : common.run_record);
    return 0;
}

// ---------------------------------------------------------- elbow / features

struct FeatureSets {
    std::vector<std::vector<float>> train, test;
    std::vector<int> train_labels, test_labels;
};

FeatureSets features_by_split(const msnn::Network<scalar>& net, const msnn::Dataset& data,
                              const msnn::SplitPlan& plan) {
    FeatureSets out;
    auto run = [&](const std::vector<int>& rows, std::vector<std::vector<float>>& feats,
                   std::vector<int>& labels) {
        std::vector<msnn::Tensor<scalar>> images;
        std::vector<std::string> ids;
        for (int idx : rows) {
            images.push_back(msnn::image_to_tensor<scalar>(data.images[idx]));
            ids.push_back(data.ids[idx]);
            labels.push_back(data.labels[idx]);
        }
        for (auto& f : msnn::extract_features(net, images, ids)) feats.push_back(f.values);
    };
    run(plan.train_indices(), out.train, out.train_labels);
    run(plan.test_indices(), out.test, out.test_labels);
    return out;
}

int run_elbow(const std::string& checkpoint, const std::string& manifest_path,
              const std::string& plan_path, std::vector<int> ks, const std::string& out,
              CommonOpts& common) {
    RunRecord record;
    record.subcommand = "elbow";
    record.inputs = {checkpoint, manifest_path, plan_path};
    record.config = {{"k", ks}};

    auto net = msnn::load_checkpoint<scalar>(checkpoint);
    record.seed = net.init_seed;
    auto manifest = msnn::load_manifest(manifest_path);
    auto data = msnn::load_dataset(manifest);
    auto plan = msnn::SplitPlan::load(plan_path);
    auto sets = features_by_split(net, data, plan);

    auto curve = msnn::elbow_select_k(sets.train, sets.train_labels, sets.test, sets.test_labels,
                                      ks);
    std::ofstream csv(out, std::ios::trunc);
    if (!csv) throw msnn::io_error("cannot write elbow curve: " + out);
    csv << "k,sse\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.k_candidates.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g", curve.k_candidates[i], curve.sse[i]);
        csv << buf << "\n";
    }
    csv.close();
    std::printf("elbow-selected k = %d\n", curve.selected_k);
    record.config["selected_k"] = curve.selected_k;
    record.add_output(out);
    record.save(common.run_record.empty() ? stem_of(out) + "_run.json" : common.run_record);
    return 0;
}

int run_features(const std::string& checkpoint, const std::string& manifest_path,
                 const std::string& out, CommonOpts& common) {
    RunRecord record;
    record.subcommand = "features";
    record.inputs = {checkpoint, manifest_path};

    auto net = msnn::load_checkpoint<scalar>(checkpoint);
    record.seed = net.init_seed;
    auto manifest = msnn::load_manifest(manifest_path);
    auto data = msnn::load_dataset(manifest);
    std::vector<msnn::Tensor<scalar>> images;
    for (const auto& img : data.images) images.push_back(msnn::image_to_tensor<scalar>(img));
    auto feats = msnn::extract_features(net, images, data.ids);

    int dim = net.spec.feature_dim();
    std::ofstream csv(out, std::ios::trunc);
    if (!csv) throw msnn::io_error("cannot write features: " + out);
    csv << "image_id";
    for (int i = 0; i < dim; ++i) csv << ",f" << i;
    csv << ",label\n";
    char buf[32];
    for (std::size_t i = 0; i < feats.size(); ++i) {
        csv << feats[i].image_id;
        for (float v : feats[i].values) {
            std::snprintf(buf, sizeof(buf), ",%.9g", v);
            csv << buf;
        }
        csv << "," << msnn::label_name(data.labels[i]) << "\n";
    }
    csv.close();
    record.add_output(out);
    record.save(common.run_record.empty() ? stem_of(out) + "_run.json" : common.run_record);
    return 0;
}

// ------------------------------------------------------- filters / featmaps

int run_filters(const std::string& checkpoint, int layer, const std::string& out,
                CommonOpts& common) {
    RunRecord record;
    record.subcommand = "filters";
    record.inputs = {checkpoint};
    record.config = {{"layer", layer}};
    auto net = msnn::load_checkpoint<scalar>(checkpoint);
    record.seed = net.init_seed;
    auto raster = msnn::visualize_filters(net, layer);
    msnn::write_pgm(out, raster.pixels, raster.width, raster.height);
    std::printf("conv%d filters tiled into %dx%d raster: %s\n", layer, raster.width,
                raster.height, out.c_str());
    record.add_output(out);
    record.save(common.run_record.empty() ? stem_of(out) + "_run.json" : common.run_record);
    return 0;
}

int run_featmaps(const std::string& checkpoint, const std::string& image_path, int layer,
                 const std::string& format, const std::string& window, const std::string& out,
                 CommonOpts& common) {
    RunRecord record;
    record.subcommand = "featmaps";
    record.inputs = {checkpoint, image_path};
    record.config = {{"layer", layer}};
    auto net = msnn::load_checkpoint<scalar>(checkpoint);
    record.seed = net.init_seed;
    auto image = load_single_image(image_path, format, window);
    auto raster = msnn::feature_maps(net, image, layer);
    msnn::write_pgm(out, raster.pixels, raster.width, raster.height);
    std::printf("conv%d feature maps tiled into %dx%d raster: %s\n", layer, raster.width,
                raster.height, out.c_str());
    record.add_output(out);
    record.save(common.run_record.empty() ? stem_of(out) + "_run.json" : common.run_record);
    return 0;
}

// ----------------------------------------------------------------- paramtable

int run_paramtable(int extent, bool as_json, CommonOpts& common) {
    RunRecord record;
    record.subcommand = "paramtable";
    record.config = {{"extent", extent}};
    auto spec = msnn::build_msnn(extent);
    auto rows = msnn::param_report(spec);

    long learnable = 0, tracked = 0;
    nlohmann::json jrows = nlohmann::json::array();
    for (const auto& r : rows) {
        learnable += r.learnable;
        tracked += r.tracked;
        jrows.push_back({{"type", r.type},
                         {"output_shape", {r.out.h, r.out.w, r.out.c}},
                         {"learnable", r.learnable},
                         {"tracked", r.tracked},
                         {"detail", r.detail}});
    }

    if (as_json) {
        nlohmann::json j;
        j["extent"] = extent;
        j["layers"] = jrows;
        j["total_learnable"] = learnable;
        j["total_tracked"] = tracked;
        j["run_record"] = record.to_json();
        std::printf("%s\n", j.dump(2).c_str());
        if (!common.run_record.empty()) record.save(common.run_record);
        return 0;
    }

    std::printf("%-3s %-9s %-16s %-22s %12s %9s\n", "#", "Layer", "Output shape", "Detail",
                "Params", "Tracked");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        char shape[32];
        std::snprintf(shape, sizeof(shape), "[%d,%d,%d]", r.out.h, r.out.w, r.out.c);
        std::printf("%-3zu %-9s %-16s %-22s %12ld %9ld\n", i + 1, r.type.c_str(), shape,
                    r.detail.c_str(), r.learnable, r.tracked);
    }
    std::printf("total learnable %ld (tracked statistics %ld)\n", learnable, tracked);
    if (!common.run_record.empty())
        record.save(common.run_record);
    else
        std::printf("run: %s\n", record.to_json().dump().c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MSNN lung-CT classifier: exact Table-I architecture, ADAM training, KNN "
                 "head, occlusion sensitivity maps"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic desk-scale corpus");
    msnn::SyntheticParams synth_params;
    std::string synth_out;
    CommonOpts synth_common;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--pos", synth_params.count_pos, "cancerous image count")
        ->check(CLI::NonNegativeNumber);
    synth->add_option("--neg", synth_params.count_neg, "non-cancerous image count")
        ->check(CLI::NonNegativeNumber);
    synth->add_option("--extent", synth_params.extent, "square image extent (divisible by 32)");
    synth->add_option("--seed", synth_params.seed, "generator seed");
    synth->add_option("--sigma-lo", synth_params.sigma_lo_frac, "blob radius low, extent frac");
    synth->add_option("--sigma-hi", synth_params.sigma_hi_frac, "blob radius high, extent frac");
    synth->add_option("--amp-lo", synth_params.amplitude_lo, "blob contrast low");
    synth->add_option("--amp-hi", synth_params.amplitude_hi, "blob contrast high");
    synth->add_option("--max-blobs", synth_params.max_blobs, "max nodules per positive")
        ->check(CLI::Range(1, 16));
    add_common(synth, synth_common);

    // train
    auto* train = app.add_subcommand("train", "train MSNN on a manifest");
    TrainArgs train_args;
    CommonOpts train_common;
    train->add_option("--manifest", train_args.manifest, "dataset manifest CSV")->required();
    train->add_option("--out", train_args.out, "checkpoint output path")->required();
    train->add_option("--split", train_args.split,
                      "training fraction, canonical 0.70/0.75/0.80/0.85")
        ->check(CLI::Validator(open_fraction_check, "FRACTION"));
    train->add_option("--seed", train_args.seed, "master seed");
    train->add_option("--epochs", train_args.epochs, "epochs")->check(CLI::PositiveNumber);
    train->add_option("--batch", train_args.batch, "batch size")->check(CLI::PositiveNumber);
    train->add_option("--lr", train_args.lr, "ADAM learning rate")->check(CLI::PositiveNumber);
    train->add_option("--loss", train_args.loss, "loss kind")
        ->check(CLI::IsMember({"mse", "cross_entropy"}));
    train->add_option("--extent", train_args.extent, "network input extent (divisible by 32)");
    train->add_option("--val-every", train_args.val_every, "validation cadence, iterations")
        ->check(CLI::PositiveNumber);
    train->add_option("--curves", train_args.curves, "curves CSV path override");
    train->add_option("--plan-out", train_args.plan_out, "split plan JSON path override");
    train->add_option("--window", train_args.window, "DICOM window: auto|soft|lung|c,w");
    add_common(train, train_common);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (softmax and/or KNN head)");
    EvalArgs eval_args;
    CommonOpts eval_common;
    eval->add_option("--checkpoint", eval_args.checkpoint, "trained checkpoint")->required();
    eval->add_option("--manifest", eval_args.manifest, "dataset manifest CSV")->required();
    eval->add_option("--split-plan", eval_args.plan, "split plan JSON from training");
    eval->add_option("--out", eval_args.out, "report JSON output path")->required();
    eval->add_option("--head", eval_args.head, "classification head")
        ->check(CLI::IsMember({"softmax", "knn", "both"}));
    eval->add_option("--k", eval_args.k, "KNN neighbor count")->check(CLI::PositiveNumber);
    eval->add_flag("--allow-even-k", eval_args.allow_even_k, "permit even k");
    eval->add_option("--window", eval_args.window, "DICOM window: auto|soft|lung|c,w");
    add_common(eval, eval_common);

    // explain
    auto* explain = app.add_subcommand("explain", "occlusion sensitivity map for one image");
    ExplainArgs ex_args;
    CommonOpts ex_common;
    explain->add_option("--checkpoint", ex_args.checkpoint, "trained checkpoint")->required();
    explain->add_option("--image", ex_args.image, "input image")->required();
    explain->add_option("--out", ex_args.out, "overlay PPM output path")->required();
    explain->add_option("--map", ex_args.map_out, "map CSV path override");
    explain->add_option("--format", ex_args.format, "image format override")
        ->check(CLI::IsMember({"pgm", "raw16", "dicom"}));
    explain->add_option("--target", ex_args.target, "class whose probability is probed")
        ->check(CLI::IsMember({"predicted", "cancerous", "non_cancerous"}));
    explain->add_option("--mask-size", ex_args.mask_size, "mask side, pixels")
        ->check(CLI::PositiveNumber);
    explain->add_option("--stride", ex_args.stride, "mask step, pixels")
        ->check(CLI::PositiveNumber);
    explain->add_option("--gray", ex_args.gray, "mask gray value in [0,1]")
        ->check(CLI::Range(0.0, 1.0));
    explain->add_option("--alpha", ex_args.alpha, "overlay blend factor")
        ->check(CLI::Range(0.0, 1.0));
    explain->add_option("--window", ex_args.window, "DICOM window: auto|soft|lung|c,w");
    add_common(explain, ex_common);

    // elbow
    auto* elbow = app.add_subcommand("elbow", "SSE-vs-k curve and elbow-selected k");
    std::string el_ck, el_manifest, el_plan, el_out;
    std::vector<int> el_ks = {1, 3, 5, 7, 9};
    CommonOpts el_common;
    elbow->add_option("--checkpoint", el_ck, "trained checkpoint")->required();
    elbow->add_option("--manifest", el_manifest, "dataset manifest CSV")->required();
    elbow->add_option("--split-plan", el_plan, "split plan JSON from training")->required();
    elbow->add_option("--k", el_ks, "candidate k values (comma separated)")->delimiter(',');
    elbow->add_option("--out", el_out, "elbow curve CSV output path")->required();
    add_common(elbow, el_common);

    // features
    auto* features = app.add_subcommand("features", "export deep-feature vectors as CSV");
    std::string ft_ck, ft_manifest, ft_out;
    CommonOpts ft_common;
    features->add_option("--checkpoint", ft_ck, "trained checkpoint")->required();
    features->add_option("--manifest", ft_manifest, "dataset manifest CSV")->required();
    features->add_option("--out", ft_out, "feature CSV output path")->required();
    add_common(features, ft_common);

    // filters
    auto* filters = app.add_subcommand("filters", "tile a conv layer's filters as PGM");
    std::string fl_ck, fl_out;
    int fl_layer = 1;
    CommonOpts fl_common;
    filters->add_option("--checkpoint", fl_ck, "checkpoint")->required();
    filters->add_option("--layer", fl_layer, "conv layer index, 1-based")
        ->check(CLI::PositiveNumber);
    filters->add_option("--out", fl_out, "PGM output path")->required();
    add_common(filters, fl_common);

    // featmaps
    auto* featmaps = app.add_subcommand("featmaps", "tile post-ReLU feature maps as PGM");
    std::string fm_ck, fm_image, fm_out, fm_format, fm_window;
    int fm_layer = 1;
    CommonOpts fm_common;
    featmaps->add_option("--checkpoint", fm_ck, "checkpoint")->required();
    featmaps->add_option("--image", fm_image, "input image")->required();
    featmaps->add_option("--layer", fm_layer, "conv layer index, 1-based")
        ->check(CLI::PositiveNumber);
    featmaps->add_option("--format", fm_format, "image format override")
        ->check(CLI::IsMember({"pgm", "raw16", "dicom"}));
    featmaps->add_option("--window", fm_window, "DICOM window: auto|soft|lung|c,w");
    featmaps->add_option("--out", fm_out, "PGM output path")->required();
    add_common(featmaps, fm_common);

    // paramtable
    auto* paramtable = app.add_subcommand("paramtable", "per-layer parameter table");
    int pt_extent = 512;
    bool pt_json = false;
    CommonOpts pt_common;
    paramtable->add_option("--extent", pt_extent, "input extent (divisible by 32)");
    paramtable->add_flag("--json", pt_json, "machine-readable output");
    add_common(paramtable, pt_common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1; // usage error
    }

    try {
        if (synth->parsed()) {
            apply_threads(synth_common);
            return run_synth(synth_out, synth_params, synth_common);
        }
        if (train->parsed()) {
            apply_threads(train_common);
            return run_train(train_args, train_common);
        }
        if (eval->parsed()) {
            apply_threads(eval_common);
            return run_eval(eval_args, eval_common);
        }
        if (explain->parsed()) {
            apply_threads(ex_common);
            return run_explain(ex_args, ex_common);
        }
        if (elbow->parsed()) {
            apply_threads(el_common);
            return run_elbow(el_ck, el_manifest, el_plan, el_ks, el_out, el_common);
        }
        if (features->parsed()) {
            apply_threads(ft_common);
            return run_features(ft_ck, ft_manifest, ft_out, ft_common);
        }
        if (filters->parsed()) {
            apply_threads(fl_common);
            return run_filters(fl_ck, fl_layer, fl_out, fl_common);
        }
        if (featmaps->parsed()) {
            apply_threads(fm_common);
            return run_featmaps(fm_ck, fm_image, fm_layer, fm_format, fm_window, fm_out,
                                fm_common);
        }
        if (paramtable->parsed()) {
            apply_threads(pt_common);
            return run_paramtable(pt_extent, pt_json, pt_common);
        }
    } catch (const msnn::numeric_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const msnn::error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
