// Independent reference implementations used as oracles by the test and
// acceptance suites. Everything here is deliberately naive (triple loops,
// exhaustive search, pair counting) and shares no code with the library paths
// it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "msnn/tensor.hpp"

namespace oracle {

// Naive triple-loop matrix product.
template <typename T>
msnn::Matrix<T> matmul_naive(const msnn::Matrix<T>& a, const msnn::Matrix<T>& b) {
    msnn::Matrix<T> out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.cols; ++j) {
            T acc = 0;
            for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

// Direct nested-loop convolution, NHWC input, (fh,fw,cin,cout) weights.
template <typename T>
msnn::Tensor<T> conv2d_direct(const msnn::Tensor<T>& x, const std::vector<T>& w,
                              const std::vector<T>& b, int fh, int fw, int cout, int stride,
                              const msnn::Padding& pad) {
    int oh = (x.h + pad.top + pad.bottom - fh) / stride + 1;
    int ow = (x.w + pad.left + pad.right - fw) / stride + 1;
    msnn::Tensor<T> y(x.n, oh, ow, cout);
    for (int in = 0; in < x.n; ++in)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int oc = 0; oc < cout; ++oc) {
                    T acc = 0;
                    for (int fy = 0; fy < fh; ++fy)
                        for (int fx = 0; fx < fw; ++fx) {
                            int iy = oy * stride + fy - pad.top;
                            int ix = ox * stride + fx - pad.left;
                            if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                            for (int ic = 0; ic < x.c; ++ic)
                                acc += x(in, iy, ix, ic) *
                                       w[((static_cast<std::size_t>(fy) * fw + fx) * x.c + ic) *
                                             cout +
                                         oc];
                        }
                    y(in, oy, ox, oc) = b.empty() ? acc : acc + b[oc];
                }
    return y;
}

// Central finite difference of a scalar function with respect to one
// coordinate; h = 1e-5 * max(1, |theta|).
inline double central_difference(double& theta, const std::function<double()>& eval) {
    double orig = theta;
    double h = 1e-5 * std::max(1.0, std::abs(orig));
    theta = orig + h;
    double lp = eval();
    theta = orig - h;
    double lm = eval();
    theta = orig;
    return (lp - lm) / (2.0 * h);
}

inline double grad_rel_error(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
}

// Exhaustive-search KNN: all pairwise distances, sort by (distance, index),
// majority vote over the first k.
inline std::pair<int, double> knn_brute(const std::vector<std::vector<double>>& train,
                                        const std::vector<int>& labels,
                                        const std::vector<double>& query, int k) {
    std::vector<std::pair<double, int>> d;
    d.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            double diff = train[i][j] - query[j];
            s += diff * diff;
        }
        d.emplace_back(std::sqrt(s), static_cast<int>(i));
    }
    std::sort(d.begin(), d.end());
    int votes1 = 0;
    for (int i = 0; i < k; ++i) votes1 += labels[d[i].second];
    int winner = votes1 * 2 > k    ? 1
                 : votes1 * 2 == k ? labels[d[0].second]
                                   : 0;
    int winning_votes = winner == 1 ? votes1 : k - votes1;
    return {winner, static_cast<double>(winning_votes) / k};
}

// Neighbor-vote probability of class 1 over the k nearest, double loop.
inline double knn_vote_fraction(const std::vector<std::vector<double>>& train,
                                const std::vector<int>& labels,
                                const std::vector<double>& query, int k) {
    std::vector<std::pair<double, int>> d;
    for (std::size_t i = 0; i < train.size(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < query.size(); ++j) {
            double diff = train[i][j] - query[j];
            s += diff * diff;
        }
        d.emplace_back(std::sqrt(s), static_cast<int>(i));
    }
    std::sort(d.begin(), d.end());
    int pos = 0;
    for (int i = 0; i < k; ++i) pos += labels[d[i].second];
    return static_cast<double>(pos) / k;
}

// SSE(k) = sum over validation samples of (y - vote_fraction_k)^2.
inline double knn_sse(const std::vector<std::vector<double>>& train,
                      const std::vector<int>& train_labels,
                      const std::vector<std::vector<double>>& val,
                      const std::vector<int>& val_labels, int k) {
    double sse = 0;
    for (std::size_t i = 0; i < val.size(); ++i) {
        double p = knn_vote_fraction(train, train_labels, val[i], k);
        double e = val_labels[i] - p;
        sse += e * e;
    }
    return sse;
}

// Elbow = interior candidate maximizing |s[i-1] - 2 s[i] + s[i+1]|, ties to
// the smaller k.
inline int elbow_brute(const std::vector<int>& ks, const std::vector<double>& sse) {
    int best = ks[1];
    double best_curv = -1;
    for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
        double curv = std::abs(sse[i - 1] - 2 * sse[i] + sse[i + 1]);
        if (curv > best_curv) {
            best_curv = curv;
            best = ks[i];
        }
    }
    return best;
}

// AUC as the Mann-Whitney statistic: fraction of positive/negative pairs
// ranked correctly, ties counted one half.
inline double auc_pair_count(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

struct MetricsRef {
    bool acc_ok, prec_ok, rec_ok, f_ok, spec_ok;
    double acc, prec, rec, f, spec;
};

// Direct arithmetic of the five confusion-matrix ratios.
inline MetricsRef metrics_direct(long tp, long fp, long tn, long fn) {
    MetricsRef m{};
    long total = tp + fp + tn + fn;
    m.acc_ok = total > 0;
    if (m.acc_ok) m.acc = static_cast<double>(tn + tp) / static_cast<double>(total);
    m.prec_ok = tp + fp > 0;
    if (m.prec_ok) m.prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.rec_ok = tp + fn > 0;
    if (m.rec_ok) m.rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f_ok = m.prec_ok && m.rec_ok && (m.prec + m.rec > 0);
    if (m.f_ok) m.f = 2 * m.prec * m.rec / (m.prec + m.rec);
    m.spec_ok = tn + fp > 0;
    if (m.spec_ok) m.spec = static_cast<double>(tn) / static_cast<double>(tn + fp);
    return m;
}

} // namespace oracle
