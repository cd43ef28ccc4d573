#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/network.hpp"
#include "msnn/tensor.hpp"

namespace msnn {

// Activations of the FC(512) stage after its ReLU, one row per image.
struct FeatureVector {
    std::string image_id;
    std::vector<float> values;
};

// Runs the network in infer mode and captures the deep-feature layer.
template <typename T>
std::vector<FeatureVector> extract_features(const Network<T>& net,
                                            const std::vector<Tensor<T>>& images,
                                            const std::vector<std::string>& ids,
                                            int batch_size = 16) {
    if (!ids.empty() && ids.size() != images.size())
        throw shape_error("extract_features: id/image count mismatch");
    int capture = net.spec.feature_layer_index();
    std::vector<FeatureVector> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += batch_size) {
        std::size_t count = std::min<std::size_t>(batch_size, images.size() - start);
        Tensor<T> batch(static_cast<int>(count), net.spec.input_extent, net.spec.input_extent,
                        net.spec.input_channels);
        for (std::size_t i = 0; i < count; ++i) {
            const Tensor<T>& img = images[start + i];
            if (img.h != net.spec.input_extent || img.w != net.spec.input_extent)
                throw shape_error("extract_features: image extent " + std::to_string(img.h) +
                                  " does not match network input " +
                                  std::to_string(net.spec.input_extent));
            std::copy(img.data.begin(), img.data.end(),
                      batch.data.begin() + i * img.size());
        }
        Tensor<T> captured;
        net.forward(batch, capture, &captured);
        for (std::size_t i = 0; i < count; ++i) {
            FeatureVector fv;
            fv.image_id = ids.empty() ? std::to_string(start + i) : ids[start + i];
            fv.values.resize(captured.c);
            for (int k = 0; k < captured.c; ++k)
                fv.values[k] = static_cast<float>(captured(static_cast<int>(i), 0, 0, k));
            out.push_back(std::move(fv));
        }
    }
    return out;
}

struct KnnPrediction {
    int label = 0;
    double vote_fraction = 0; // winning votes / k
    double positive_fraction = 0; // neighbors labeled 1 / k, the ROC score
};

// Euclidean KNN over deep features. k is odd by default so two-class votes
// cannot tie; even k must be requested explicitly and breaks vote ties with
// the nearest neighbor's label.
class KnnModel {
public:
    KnnModel(std::vector<std::vector<float>> features, std::vector<int> labels, int k,
             bool allow_even = false)
        : features_(std::move(features)), labels_(std::move(labels)), k_(k) {
        if (features_.size() != labels_.size())
            throw shape_error("knn: feature/label count mismatch");
        if (features_.empty()) throw shape_error("knn: empty training set");
        if (k_ < 1) throw shape_error("knn: k must be positive");
        if (k_ > static_cast<int>(features_.size()))
            throw shape_error("knn: k = " + std::to_string(k_) + " exceeds training size " +
                              std::to_string(features_.size()));
        if (k_ % 2 == 0 && !allow_even)
            throw shape_error("knn: even k = " + std::to_string(k_) +
                              " would allow vote ties; pass allow_even to permit it");
    }

    int k() const { return k_; }
    std::size_t size() const { return features_.size(); }

    KnnPrediction predict(const std::vector<float>& query) const {
        return predict_with_k(query, k_);
    }

    // Distance ties break toward the lower training index.
    KnnPrediction predict_with_k(const std::vector<float>& query, int k) const {
        if (k < 1 || k > static_cast<int>(features_.size()))
            throw shape_error("knn: k out of range");
        std::vector<std::pair<double, int>> dist(features_.size());
        for (std::size_t i = 0; i < features_.size(); ++i) {
            if (features_[i].size() != query.size())
                throw shape_error("knn: query dimension mismatch");
            double s = 0;
            for (std::size_t j = 0; j < query.size(); ++j) {
                double d = static_cast<double>(features_[i][j]) - query[j];
                s += d * d;
            }
            dist[i] = {s, static_cast<int>(i)};
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        int votes1 = 0;
        for (int i = 0; i < k; ++i) votes1 += labels_[dist[i].second];
        KnnPrediction pred;
        pred.positive_fraction = static_cast<double>(votes1) / k;
        if (votes1 * 2 > k)
            pred.label = 1;
        else if (votes1 * 2 < k)
            pred.label = 0;
        else
            pred.label = labels_[dist[0].second]; // even-k tie: nearest neighbor decides
        int winning = pred.label == 1 ? votes1 : k - votes1;
        pred.vote_fraction = static_cast<double>(winning) / k;
        return pred;
    }

    const std::vector<std::vector<float>>& features() const { return features_; }
    const std::vector<int>& labels() const { return labels_; }

private:
    std::vector<std::vector<float>> features_;
    std::vector<int> labels_;
    int k_;
};

struct ElbowCurve {
    std::vector<int> k_candidates;
    std::vector<double> sse;
    int selected_k = 0;
};

// The elbow of an SSE-vs-k curve: the interior candidate with maximal
// discrete curvature |SSE(k[i-1]) - 2 SSE(k[i]) + SSE(k[i+1])|, ties to the
// smaller k.
inline int select_elbow(const std::vector<int>& k_candidates, const std::vector<double>& sse) {
    if (k_candidates.size() < 3 || sse.size() != k_candidates.size())
        throw shape_error("elbow: at least 3 candidate k values required");
    int selected = k_candidates[1];
    double best_curv = -1;
    for (std::size_t i = 1; i + 1 < k_candidates.size(); ++i) {
        double curv = std::abs(sse[i - 1] - 2 * sse[i] + sse[i + 1]);
        if (curv > best_curv) {
            best_curv = curv;
            selected = k_candidates[i];
        }
    }
    return selected;
}

// SSE(k) = sum over validation samples of (y - p_k)^2, where p_k is the
// fraction of the k nearest training neighbors labeled 1.
inline ElbowCurve elbow_select_k(const std::vector<std::vector<float>>& train_features,
                                 const std::vector<int>& train_labels,
                                 const std::vector<std::vector<float>>& val_features,
                                 const std::vector<int>& val_labels,
                                 const std::vector<int>& k_candidates) {
    if (k_candidates.size() < 3)
        throw shape_error("elbow: at least 3 candidate k values required");
    for (std::size_t i = 1; i < k_candidates.size(); ++i)
        if (k_candidates[i] <= k_candidates[i - 1])
            throw shape_error("elbow: candidates must be strictly increasing");
    if (val_features.size() != val_labels.size())
        throw shape_error("elbow: validation feature/label count mismatch");

    KnnModel model(train_features, train_labels, 1, true);
    ElbowCurve curve;
    curve.k_candidates = k_candidates;
    curve.sse.assign(k_candidates.size(), 0.0);
    for (std::size_t ki = 0; ki < k_candidates.size(); ++ki) {
        double sse = 0;
        for (std::size_t i = 0; i < val_features.size(); ++i) {
            double p = model.predict_with_k(val_features[i], k_candidates[ki]).positive_fraction;
            double e = static_cast<double>(val_labels[i]) - p;
            sse += e * e;
        }
        curve.sse[ki] = sse;
    }
    curve.selected_k = select_elbow(k_candidates, curve.sse);
    return curve;
}

} // namespace msnn
