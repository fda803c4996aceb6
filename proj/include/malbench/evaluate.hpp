#pragma once

// Accuracy, ROC curves, AUC and recall at a target false-positive rate.

#include <span>
#include <vector>

namespace malbench {

struct RocCurve {
    std::vector<double> fpr;
    std::vector<double> tpr;
    std::vector<double> thresholds;  // thresholds[0] is a sentinel above every score
};

struct OperatingPoint {
    double recall = 0.0;
    double achieved_fpr = 0.0;

    bool operator==(const OperatingPoint&) const = default;
};

double accuracy(std::span<const int> y, std::span<const int> yhat);

/// Every distinct score is a threshold; a point is (FP/N, TP/P) over scores >= t.
RocCurve roc_curve(std::span<const int> y, std::span<const double> scores);

/// Trapezoidal area.
double auc(const RocCurve& curve);

/// First curve point whose FPR reaches the target.
OperatingPoint recall_at_fpr(const RocCurve& curve, double target);

/// Operating point of a hard-label classifier. The FPR here is FP over all
/// samples, which is what the reference harness reports for SVM rows.
OperatingPoint hard_label_operating_point(std::span<const int> y, std::span<const int> yhat);

/// Conventional FP / negatives, for diagnostics.
double false_positive_rate(std::span<const int> y, std::span<const int> yhat);

}  // namespace malbench
