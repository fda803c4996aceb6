#include "malbench/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "malbench/common.hpp"

namespace malbench {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) {
        throw Error(ErrorKind::LengthMismatch, std::to_string(a) + " labels vs " + std::to_string(b) + " predictions");
    }
    if (a == 0) throw Error(ErrorKind::Empty, "no samples");
}

}  // namespace

double accuracy(std::span<const int> y, std::span<const int> yhat) {
    check_lengths(y.size(), yhat.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += y[i] == yhat[i];
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

RocCurve roc_curve(std::span<const int> y, std::span<const double> scores) {
    check_lengths(y.size(), scores.size());
    std::size_t positives = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(scores[i])) throw Error(ErrorKind::NonFiniteFeature, "non-finite score");
        positives += y[i] == 1;
    }
    const std::size_t negatives = y.size() - positives;
    if (positives == 0 || negatives == 0) throw Error(ErrorKind::SingleClass, "ROC needs both classes");

    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    const double top = scores[order.front()];
    curve.thresholds.push_back(std::isinf(top + 1.0) ? std::numeric_limits<double>::infinity() : top + 1.0);
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < order.size();) {
        const double t = scores[order[k]];
        while (k < order.size() && scores[order[k]] == t) {
            (y[order[k]] == 1 ? tp : fp) += 1;
            ++k;
        }
        curve.thresholds.push_back(t);
        curve.fpr.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
        curve.tpr.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    }
    return curve;
}

double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
        area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
    }
    return area;
}

OperatingPoint recall_at_fpr(const RocCurve& curve, double target) {
    if (!(target > 0.0 && target < 1.0)) throw Error(ErrorKind::InvalidArgument, "target FPR must lie in (0,1)");
    for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
        if (curve.fpr[i] >= target) return {curve.tpr[i], curve.fpr[i]};
    }
    return {curve.tpr.back(), curve.fpr.back()};
}

OperatingPoint hard_label_operating_point(std::span<const int> y, std::span<const int> yhat) {
    check_lengths(y.size(), yhat.size());
    std::size_t p = 0, tp = 0, fp = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] == 1) {
            ++p;
            tp += yhat[i] == 1;
        } else {
            fp += yhat[i] == 1;
        }
    }
    if (p == 0) throw Error(ErrorKind::NoPositives, "no positive samples");
    return {static_cast<double>(tp) / static_cast<double>(p), static_cast<double>(fp) / static_cast<double>(y.size())};
}

double false_positive_rate(std::span<const int> y, std::span<const int> yhat) {
    check_lengths(y.size(), yhat.size());
    std::size_t n = 0, fp = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 1) {
            ++n;
            fp += yhat[i] == 1;
        }
    }
    if (n == 0) throw Error(ErrorKind::SingleClass, "no negative samples");
    return static_cast<double>(fp) / static_cast<double>(n);
}

}  // namespace malbench
