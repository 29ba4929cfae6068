#include "biomark/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "biomark/error.hpp"

namespace biomark {

namespace {

void check_inputs(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw ValidationError("metrics: label and score lengths differ");
    std::size_t pos = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw ValidationError("metrics: labels must be 0 or 1");
        pos += static_cast<std::size_t>(y);
    }
    if (pos == 0 || pos == labels.size()) throw ValidationError("metrics: label vector contains a single class");
    for (double s : scores)
        if (!std::isfinite(s)) throw ValidationError("metrics: non-finite score");
}

}  // namespace

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
    check_inputs(labels, scores);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the average rank keeps every quantity an exact integer.
    double rank2_sum_pos = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double rank2 = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) {
                rank2_sum_pos += rank2;
                ++n_pos;
            }
        i = j;
    }
    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n - n_pos);
    // U = sum(ranks of positives) - np(np+1)/2; twice U is an integer.
    const double u2 = rank2_sum_pos - np * (np + 1.0);
    return u2 / (2.0 * np * nn);
}

StatBlock compute_metrics(std::span<const int> labels, std::span<const double> scores, double threshold) {
    check_inputs(labels, scores);
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        if (labels[i] == 1)
            predicted ? ++tp : ++fn;
        else
            predicted ? ++fp : ++tn;
    }
    StatBlock s;
    s.acc = static_cast<double>(tp + tn) / static_cast<double>(labels.size());
    s.sens = static_cast<double>(tp) / static_cast<double>(tp + fn);
    s.spec = static_cast<double>(tn) / static_cast<double>(tn + fp);
    s.auc = roc_auc(labels, scores);
    return s;
}

}  // namespace biomark
