#include <cmath>
#include <numbers>

#include "biomark/classifiers.hpp"
#include "biomark/error.hpp"

namespace biomark::classify {

GnbModel gnb_fit(const Eigen::MatrixXd& x, std::span<const int> y) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (static_cast<std::size_t>(n) != y.size()) throw ValidationError("gnb_fit: label count differs from row count");
    Eigen::Index count[2] = {0, 0};
    for (int v : y) {
        if (v != 0 && v != 1) throw ValidationError("gnb_fit: labels must be 0 or 1");
        ++count[v];
    }
    if (count[0] == 0 || count[1] == 0) throw ValidationError("gnb_fit: training set contains a single class");
    if (count[0] < 2 || count[1] < 2) throw ValidationError("gnb_fit: need at least 2 rows per class");

    GnbModel m;
    m.mean = Eigen::MatrixXd::Zero(2, p);
    m.var = Eigen::MatrixXd::Zero(2, p);
    for (Eigen::Index i = 0; i < n; ++i) m.mean.row(y[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < 2; ++c) m.mean.row(c) /= static_cast<double>(count[c]);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int c = y[static_cast<std::size_t>(i)];
        m.var.row(c) += (x.row(i) - m.mean.row(c)).array().square().matrix();
    }
    // Population variances, floored relative to the pooled feature variance.
    for (int c = 0; c < 2; ++c) m.var.row(c) /= static_cast<double>(count[c]);
    const Eigen::RowVectorXd global_mean = x.colwise().mean();
    for (Eigen::Index j = 0; j < p; ++j) {
        const double gv = (x.col(j).array() - global_mean(j)).square().mean();
        const double floor = std::max(1e-9 * gv, 1e-300);
        for (int c = 0; c < 2; ++c) m.var(c, j) = std::max(m.var(c, j), floor);
    }
    for (int c = 0; c < 2; ++c) m.log_prior[c] = std::log(static_cast<double>(count[c]) / static_cast<double>(n));
    return m;
}

Eigen::VectorXd gnb_predict(const GnbModel& m, const Eigen::MatrixXd& x) {
    if (x.cols() != m.mean.cols()) throw ValidationError("gnb_predict: feature count differs from the model");
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double log_odds = m.log_prior[1] - m.log_prior[0];
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double d1 = x(i, j) - m.mean(1, j);
            const double d0 = x(i, j) - m.mean(0, j);
            log_odds += -0.5 * (d1 * d1 / m.var(1, j) + std::log(m.var(1, j))) +
                        0.5 * (d0 * d0 / m.var(0, j) + std::log(m.var(0, j)));
        }
        out(i) = logistic(log_odds);
    }
    return out;
}

}  // namespace biomark::classify
