#pragma once

#include <span>

namespace biomark {

/// Accuracy, sensitivity, specificity and ROC AUC, MCI (label 1) positive.
struct StatBlock {
    double acc = 0.0;
    double sens = 0.0;
    double spec = 0.0;
    double auc = 0.0;
};

/// Mann-Whitney AUC from average ranks; tied scores get half credit.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

/// Hard label is 1 when score >= threshold.
StatBlock compute_metrics(std::span<const int> labels, std::span<const double> scores, double threshold = 0.5);

}  // namespace biomark
