#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msnn/dataset.hpp"
#include "msnn/error.hpp"
#include "msnn/layers.hpp"
#include "msnn/network.hpp"
#include "msnn/rng.hpp"

namespace msnn {

// The paper's protocol: ADAM, batch 20, 20 epochs. Learning rate and the
// ADAM moments are the conventional defaults; the paper fixes only
// batch and epochs.
struct TrainConfig {
    int batch_size = 20;
    int epochs = 20;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    LossKind loss = LossKind::Mse;
    std::uint64_t seed = 1;
    double split_fraction = 0.70; // canonical splits: 0.70 / 0.75 / 0.80 / 0.85
    int val_every = 10;           // validation cadence in iterations

    void validate() const {
        if (batch_size < 1) throw shape_error("train config: batch_size must be >= 1");
        if (epochs < 1) throw shape_error("train config: epochs must be >= 1");
        if (!(split_fraction > 0.0 && split_fraction < 1.0))
            throw shape_error("train config: split fraction must lie in (0,1)");
        if (val_every < 1) throw shape_error("train config: val_every must be >= 1");
    }
};

inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

// Stratified train/test partition, reproducible from the seed. Per-class
// train count is round-half-up(fraction * class size).
struct SplitPlan {
    std::uint64_t seed = 0;
    double fraction = 0.70;
    struct ClassSplit {
        int label = 0;
        std::vector<int> train, test; // manifest row indices
    };
    std::vector<ClassSplit> classes; // ordered by label value

    std::vector<int> train_indices() const {
        std::vector<int> out;
        for (const auto& c : classes) out.insert(out.end(), c.train.begin(), c.train.end());
        return out;
    }
    std::vector<int> test_indices() const {
        std::vector<int> out;
        for (const auto& c : classes) out.insert(out.end(), c.test.begin(), c.test.end());
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["seed"] = seed;
        j["fraction"] = fraction;
        j["classes"] = nlohmann::json::array();
        for (const auto& c : classes)
            j["classes"].push_back(
                {{"label", label_name(c.label)}, {"train", c.train}, {"test", c.test}});
        return j;
    }

    static SplitPlan from_json(const nlohmann::json& j) {
        SplitPlan plan;
        try {
            plan.seed = j.at("seed").get<std::uint64_t>();
            plan.fraction = j.at("fraction").get<double>();
            for (const auto& c : j.at("classes")) {
                ClassSplit cs;
                cs.label = label_from_string(c.at("label").get<std::string>(), 0);
                cs.train = c.at("train").get<std::vector<int>>();
                cs.test = c.at("test").get<std::vector<int>>();
                plan.classes.push_back(std::move(cs));
            }
        } catch (const nlohmann::json::exception& e) {
            throw io_error(std::string("malformed split plan: ") + e.what());
        }
        return plan;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw io_error("cannot write split plan: " + path);
        out << to_json().dump(2) << "\n";
    }

    static SplitPlan load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw io_error("cannot open split plan: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw io_error("malformed split plan " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

inline SplitPlan split_dataset(const Manifest& manifest, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw shape_error("split fraction must lie in (0,1), got " + std::to_string(fraction));
    SplitPlan plan;
    plan.seed = seed;
    plan.fraction = fraction;
    for (int label : {kNonCancerous, kCancerous}) {
        SplitPlan::ClassSplit cs;
        cs.label = label;
        std::vector<int> indices;
        for (std::size_t i = 0; i < manifest.rows.size(); ++i)
            if (manifest.rows[i].label == label) indices.push_back(static_cast<int>(i));
        if (indices.size() < 2)
            throw io_error("class '" + label_name(label) + "' has " +
                           std::to_string(indices.size()) +
                           " samples; at least 2 are required to split");
        Rng rng(seed, 0x5117u + static_cast<std::uint64_t>(label)); // one stream per class
        rng.shuffle(indices);
        long train_count = round_half_up(fraction * static_cast<double>(indices.size()));
        cs.train.assign(indices.begin(), indices.begin() + train_count);
        cs.test.assign(indices.begin() + train_count, indices.end());
        plan.classes.push_back(std::move(cs));
    }
    return plan;
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moment buffers per learnable blob, plus the shared timestep.
template <typename T>
struct AdamState {
    std::vector<GradBlobs<T>> m, v; // same shape as the network's learnable blobs
    std::int64_t t = 0;

    template <typename Net>
    static AdamState for_network(Net& net) {
        AdamState s;
        auto blobs = net.learnable_blobs();
        s.m.resize(blobs.size());
        s.v.resize(blobs.size());
        for (std::size_t i = 0; i < blobs.size(); ++i) {
            s.m[i].resize(blobs[i].size());
            s.v[i].resize(blobs[i].size());
            for (std::size_t j = 0; j < blobs[i].size(); ++j) {
                s.m[i][j].assign(blobs[i][j]->size(), T(0));
                s.v[i][j].assign(blobs[i][j]->size(), T(0));
            }
        }
        return s;
    }
};

// One bias-corrected ADAM update of a single parameter blob. epsilon is
// applied outside the square root.
template <typename T>
void adam_step(std::vector<T>& params, const std::vector<T>& grads, std::vector<T>& m,
               std::vector<T>& v, std::int64_t t, const AdamConfig& cfg) {
    if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
        throw shape_error("adam_step: parameter/gradient/state sizes disagree");
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        double mhat = mi / bc1;
        double vhat = vi / bc2;
        params[i] = static_cast<T>(params[i] - cfg.learning_rate * mhat /
                                                   (std::sqrt(vhat) + cfg.epsilon));
    }
}

struct CurvePoint {
    long iteration = 0;
    double train_acc = 0; // percent
    double train_loss = 0;
    std::optional<double> val_acc; // percent, on the validation cadence
    std::optional<double> val_loss;
};

struct TrainingCurves {
    std::vector<CurvePoint> points;

    void save_csv(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw io_error("cannot write curves: " + path);
        out << "iteration,train_acc,train_loss,val_acc,val_loss\n";
        char buf[160];
        for (const auto& p : points) {
            std::snprintf(buf, sizeof(buf), "%ld,%.6f,%.8g,", p.iteration, p.train_acc,
                          p.train_loss);
            out << buf;
            if (p.val_acc) {
                std::snprintf(buf, sizeof(buf), "%.6f,%.8g", *p.val_acc, *p.val_loss);
                out << buf;
            } else {
                out << ",";
            }
            out << "\n";
        }
    }
};

template <typename T>
Tensor<T> build_batch(const Dataset& ds, const std::vector<int>& indices, std::size_t start,
                      std::size_t count, int extent) {
    Tensor<T> batch(static_cast<int>(count), extent, extent, 1);
    for (std::size_t i = 0; i < count; ++i) {
        const ImageRecord& img = ds.images[indices[start + i]];
        if (img.extent != extent)
            throw shape_error("image '" + ds.ids[indices[start + i]] + "' has extent " +
                              std::to_string(img.extent) + ", network expects " +
                              std::to_string(extent));
        for (std::size_t p = 0; p < img.pixels.size(); ++p)
            batch.data[i * img.pixels.size() + p] = static_cast<T>(img.pixels[p]);
    }
    return batch;
}

struct EvalOutput {
    double accuracy_pct = 0;
    double loss = 0;
    std::vector<int> predictions;
    std::vector<double> scores; // p(cancerous)
};

// Batched infer-mode evaluation over the given manifest rows.
template <typename T>
EvalOutput evaluate_split(const Network<T>& net, const Dataset& ds,
                          const std::vector<int>& indices, LossKind kind, int batch_size) {
    EvalOutput out;
    if (indices.empty()) throw shape_error("evaluate_split: empty index list");
    double total_loss = 0;
    long correct = 0;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        std::size_t count = std::min<std::size_t>(batch_size, indices.size() - start);
        auto batch = build_batch<T>(ds, indices, start, count, net.spec.input_extent);
        auto probs = net.forward(batch);
        std::vector<int> labels(count);
        for (std::size_t i = 0; i < count; ++i) labels[i] = ds.labels[indices[start + i]];
        total_loss += loss_with_grad(probs, labels, kind).value * static_cast<double>(count);
        for (std::size_t i = 0; i < count; ++i) {
            double p1 = probs(static_cast<int>(i), 0, 0, kCancerous);
            int pred = p1 >= probs(static_cast<int>(i), 0, 0, kNonCancerous) ? 1 : 0;
            out.predictions.push_back(pred);
            out.scores.push_back(p1);
            correct += pred == labels[i] ? 1 : 0;
        }
    }
    out.accuracy_pct = 100.0 * static_cast<double>(correct) / indices.size();
    out.loss = total_loss / static_cast<double>(indices.size());
    return out;
}

// Full training run: epochs * ceil(|train|/batch) iterations, fresh shuffle
// per epoch, BN in train mode, per-iteration curve logging and periodic
// validation. Deterministic given (seed, config, data).
template <typename T>
TrainingCurves train(Network<T>& net, const Dataset& ds, const SplitPlan& plan,
                     const TrainConfig& config) {
    config.validate();
    auto train_idx = plan.train_indices();
    auto test_idx = plan.test_indices();
    if (train_idx.empty()) throw shape_error("train: split plan has no training rows");

    AdamConfig adam_cfg{config.learning_rate, config.beta1, config.beta2, config.epsilon};
    auto adam = AdamState<T>::for_network(net);
    auto blobs = net.learnable_blobs();

    TrainingCurves curves;
    long iteration = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(config.seed, 0xe90c + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(train_idx);
        for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            std::size_t count =
                std::min<std::size_t>(config.batch_size, train_idx.size() - start);
            auto batch = build_batch<T>(ds, train_idx, start, count, net.spec.input_extent);
            std::vector<int> labels(count);
            for (std::size_t i = 0; i < count; ++i) labels[i] = ds.labels[train_idx[start + i]];

            std::vector<typename Network<T>::Tape> tapes;
            auto probs = net.forward_train(batch, tapes);
            auto loss = loss_with_grad(probs, labels, config.loss);
            std::vector<GradBlobs<T>> grads;
            net.backward(tapes, loss.grad, grads);

            ++adam.t;
            for (std::size_t li = 0; li < blobs.size(); ++li)
                for (std::size_t bi = 0; bi < blobs[li].size(); ++bi)
                    adam_step(*blobs[li][bi], grads[li][bi], adam.m[li][bi], adam.v[li][bi],
                              adam.t, adam_cfg);

            long correct = 0;
            for (std::size_t i = 0; i < count; ++i) {
                double p1 = probs(static_cast<int>(i), 0, 0, kCancerous);
                int pred = p1 >= probs(static_cast<int>(i), 0, 0, kNonCancerous) ? 1 : 0;
                correct += pred == labels[i] ? 1 : 0;
            }

            CurvePoint point;
            point.iteration = ++iteration;
            point.train_acc = 100.0 * static_cast<double>(correct) / count;
            point.train_loss = loss.value;
            if (!test_idx.empty() && iteration % config.val_every == 0) {
                auto val = evaluate_split(net, ds, test_idx, config.loss, config.batch_size);
                point.val_acc = val.accuracy_pct;
                point.val_loss = val.loss;
            }
            curves.points.push_back(point);
        }
        ++net.epochs_completed;
    }
    return curves;
}

} // namespace msnn
