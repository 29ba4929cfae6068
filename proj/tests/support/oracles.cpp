#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace oracle {

Eigen::VectorXd logistic_mle(const Eigen::MatrixXd& x, std::span<const int> y) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd a(n, x.cols() + 1);
    a.col(0).setOnes();
    a.rightCols(x.cols()) = x;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(a.cols());
    for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd eta = a * b;
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(a.cols());
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(a.cols(), a.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-eta(i)));
            grad += (y[static_cast<std::size_t>(i)] - p) * a.row(i).transpose();
            h += p * (1.0 - p) * a.row(i).transpose() * a.row(i);
        }
        const Eigen::VectorXd step = h.ldlt().solve(grad);
        b += step;
        if (step.cwiseAbs().maxCoeff() < 1e-13) break;
    }
    return b;
}

double pair_count_auc(std::span<const int> y, std::span<const double> s) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

std::vector<double> relieff_brute(const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t j) {
    const auto m = static_cast<std::size_t>(x.rows());
    const auto n = static_cast<std::size_t>(x.cols());
    std::vector<double> lo(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        lo[i] = hi[i] = x(0, static_cast<Eigen::Index>(i));
        for (std::size_t r = 1; r < m; ++r) {
            lo[i] = std::min(lo[i], x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)));
            hi[i] = std::max(hi[i], x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)));
        }
    }
    auto g = [&](std::size_t i, std::size_t a, std::size_t b) {
        const double range = hi[i] - lo[i];
        if (range == 0.0) return 0.0;
        return std::abs(x(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) -
                        x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i))) /
               range;
    };
    auto d = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g(i, a, b);
        return s;
    };
    std::vector<double> acc(n, 0.0);
    for (std::size_t l = 0; l < m; ++l) {
        std::vector<std::pair<double, std::size_t>> hits, misses;
        for (std::size_t k = 0; k < m; ++k) {
            if (k == l) continue;
            (y[k] == y[l] ? hits : misses).emplace_back(d(l, k), k);
        }
        auto by_distance = [](const auto& a, const auto& b) { return a.first < b.first; };
        std::stable_sort(hits.begin(), hits.end(), by_distance);
        std::stable_sort(misses.begin(), misses.end(), by_distance);
        for (std::size_t i = 0; i < n; ++i) {
            double ms = 0.0, hs = 0.0;
            for (std::size_t q = 0; q < j; ++q) ms += g(i, l, misses[q].second);
            for (std::size_t q = 0; q < j; ++q) hs += g(i, l, hits[q].second);
            acc[i] += ms - hs;
        }
    }
    for (auto& v : acc) v /= static_cast<double>(m) * static_cast<double>(j);
    return acc;
}

double studentized_range_mc(double q, int k, int df, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    std::chi_squared_distribution<double> chi(df);
    std::size_t above = 0;
    for (std::size_t t = 0; t < draws; ++t) {
        double lo = z(gen), hi = lo;
        for (int i = 1; i < k; ++i) {
            const double v = z(gen);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double s = std::sqrt(chi(gen) / df);
        if ((hi - lo) / s > q) ++above;
    }
    return static_cast<double>(above) / static_cast<double>(draws);
}

double studentized_range_mc_quantile(double alpha, int k, int df, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    std::chi_squared_distribution<double> chi(df);
    std::vector<double> q(draws);
    for (auto& v : q) {
        double lo = z(gen), hi = lo;
        for (int i = 1; i < k; ++i) {
            const double u = z(gen);
            lo = std::min(lo, u);
            hi = std::max(hi, u);
        }
        v = (hi - lo) / std::sqrt(chi(gen) / df);
    }
    const auto at = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(draws))) - 1;
    std::nth_element(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(at), q.end());
    return q[at];
}

}  // namespace oracle
