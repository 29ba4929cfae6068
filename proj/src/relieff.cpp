#include "biomark/relieff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biomark/error.hpp"
#include "biomark/rng.hpp"

namespace biomark::relieff {

RankingVector relieff_rank(const Eigen::MatrixXd& x, const std::vector<int>& y, const ReliefFConfig& config) {
    const auto m = static_cast<std::size_t>(x.rows());
    const auto n = static_cast<std::size_t>(x.cols());
    if (y.size() != m) throw ValidationError("relieff_rank: label count differs from row count");
    if (config.neighbors < 1) throw ValidationError("relieff_rank: neighbor count must be >= 1");
    if (!config.discrete.empty() && config.discrete.size() != n)
        throw ValidationError("relieff_rank: discrete mask length differs from feature count");
    const std::size_t j_nb = config.neighbors;
    const std::size_t n1 = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    const std::size_t n0 = m - n1;
    if (n0 + n1 != m || std::any_of(y.begin(), y.end(), [](int v) { return v != 0 && v != 1; }))
        throw ValidationError("relieff_rank: labels must be 0 or 1");
    if (std::min(n0, n1) < j_nb + 1)
        throw ValidationError("relieff_rank: each class needs at least J + 1 = " + std::to_string(j_nb + 1) +
                              " rows (have " + std::to_string(n0) + " and " + std::to_string(n1) + ")");

    RankingVector out;
    out.scores.assign(n, 0.0);

    std::vector<double> range(n);
    bool any_range = false;
    for (std::size_t i = 0; i < n; ++i) {
        const auto col = x.col(static_cast<Eigen::Index>(i));
        range[i] = col.maxCoeff() - col.minCoeff();
        any_range = any_range || range[i] > 0.0;
    }
    if (!any_range) {
        out.degenerate = true;
        return out;
    }
    auto is_discrete = [&](std::size_t i) { return !config.discrete.empty() && config.discrete[i]; };
    auto diff = [&](std::size_t i, std::size_t a, std::size_t b) {
        const double xa = x(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i));
        const double xb = x(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i));
        if (range[i] == 0.0) return 0.0;
        if (is_discrete(i)) return xa != xb ? 1.0 : 0.0;
        return std::abs(xa - xb) / range[i];
    };

    // Symmetric distance matrix, features summed in column order.
    std::vector<double> dist(m * m, 0.0);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i) d += diff(i, a, b);
            dist[a * m + b] = d;
            dist[b * m + a] = d;
        }

    std::vector<std::size_t> sampled;
    if (config.samples) {
        if (*config.samples < 1) throw ValidationError("relieff_rank: sample count L must be >= 1");
        Rng rng(config.seed);
        for (std::size_t s = 0; s < *config.samples; ++s) sampled.push_back(static_cast<std::size_t>(rng.below(m)));
    } else {
        sampled.resize(m);
        std::iota(sampled.begin(), sampled.end(), 0);
    }

    std::vector<double> acc(n, 0.0);
    std::vector<std::size_t> hits_pool, miss_pool;
    for (std::size_t l : sampled) {
        hits_pool.clear();
        miss_pool.clear();
        for (std::size_t k = 0; k < m; ++k) {
            if (k == l) continue;
            (y[k] == y[l] ? hits_pool : miss_pool).push_back(k);
        }
        const double* dl = &dist[l * m];
        auto closer = [dl](std::size_t a, std::size_t b) { return dl[a] < dl[b] || (dl[a] == dl[b] && a < b); };
        std::partial_sort(hits_pool.begin(), hits_pool.begin() + static_cast<std::ptrdiff_t>(j_nb), hits_pool.end(), closer);
        std::partial_sort(miss_pool.begin(), miss_pool.begin() + static_cast<std::ptrdiff_t>(j_nb), miss_pool.end(), closer);
        for (std::size_t i = 0; i < n; ++i) {
            double miss_sum = 0.0, hit_sum = 0.0;
            for (std::size_t q = 0; q < j_nb; ++q) miss_sum += diff(i, l, miss_pool[q]);
            for (std::size_t q = 0; q < j_nb; ++q) hit_sum += diff(i, l, hits_pool[q]);
            acc[i] += miss_sum - hit_sum;
        }
    }
    const double denom = static_cast<double>(sampled.size()) * static_cast<double>(j_nb);
    for (std::size_t i = 0; i < n; ++i) out.scores[i] = acc[i] / denom;
    return out;
}

std::vector<std::size_t> select_positive(const RankingVector& r) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < r.scores.size(); ++i)
        if (r.scores[i] > 0.0) idx.push_back(i);
    return idx;
}

}  // namespace biomark::relieff
