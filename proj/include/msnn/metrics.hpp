#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "msnn/error.hpp"

namespace msnn {

// Positive class = cancerous throughout.
struct ConfusionMatrix {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    long total() const { return tp + fp + tn + fn; }
};

inline ConfusionMatrix confusion(const std::vector<int>& predictions,
                                 const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw shape_error("confusion: " + std::to_string(predictions.size()) +
                          " predictions vs " + std::to_string(labels.size()) + " labels");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        int p = predictions[i], y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1))
            throw shape_error("confusion: non-binary value at row " + std::to_string(i));
        if (y == 1)
            p == 1 ? ++cm.tp : ++cm.fn;
        else
            p == 1 ? ++cm.fp : ++cm.tn;
    }
    return cm;
}

// The five confusion-matrix ratios. A 0/0 ratio is reported as an engaged
// nullopt ("undefined"), never silently coerced to 0 or 1.
struct MetricsReport {
    std::optional<double> accuracy, precision, recall, f_score, specificity;
};

inline MetricsReport metrics(const ConfusionMatrix& cm) {
    MetricsReport m;
    auto ratio = [](long num, long den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.accuracy = ratio(cm.tn + cm.tp, cm.total());
    m.precision = ratio(cm.tp, cm.tp + cm.fp);
    m.recall = ratio(cm.tp, cm.tp + cm.fn); // sensitivity; single code path
    m.specificity = ratio(cm.tn, cm.tn + cm.fp);
    if (m.precision && m.recall && *m.precision + *m.recall > 0)
        m.f_score = 2.0 * (*m.precision * *m.recall) / (*m.precision + *m.recall);
    return m;
}

// Rounds a ratio to integer percent, half away from zero, for the
// human-readable report; machine output keeps full precision.
inline std::string percent_str(const std::optional<double>& v) {
    if (!v) return "n/a";
    return std::to_string(static_cast<long>(std::floor(*v * 100.0 + 0.5))) + "%";
}

struct RocPoint {
    double threshold, fpr, tpr;
};

struct RocCurve {
    std::vector<RocPoint> points; // from (0,0) to (1,1)
    double auc = 0;
};

// Threshold sweep over all distinct scores (predict positive when
// score >= threshold); equal scores enter together, which makes the
// trapezoidal area equal the Mann-Whitney pair statistic with half-credit
// ties.
inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw shape_error("roc_auc: score/label length mismatch");
    long pos = 0, neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (scores[i] < 0.0 || scores[i] > 1.0)
            throw shape_error("roc_auc: score outside [0,1] at row " + std::to_string(i));
        labels[i] == 1 ? ++pos : ++neg;
    }
    if (pos == 0 || neg == 0)
        throw shape_error("roc_auc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    // the trapezoid area is accumulated in integer units of 1/(2*pos*neg), so
    // the result equals the Mann-Whitney pair statistic bit for bit
    long tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
    long long area_units = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            labels[order[i]] == 1 ? ++tp : ++fp;
            ++i;
        }
        curve.points.push_back({s, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
        area_units += static_cast<long long>(fp - prev_fp) * (tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
    }
    curve.auc = static_cast<double>(area_units) / (2.0 * static_cast<double>(pos) * neg);
    return curve;
}

} // namespace msnn
