#include <doctest.h>

#include "biomark/error.hpp"
#include "biomark/relieff.hpp"
#include "biomark/rng.hpp"
#include "oracles.hpp"

using namespace biomark;
using namespace biomark::relieff;

TEST_CASE("single separating feature scores 1") {
    Eigen::MatrixXd x(4, 1);
    x << 0, 0, 1, 1;
    const auto r = relieff_rank(x, {0, 0, 1, 1}, {.neighbors = 1});
    CHECK(r.scores[0] == 1.0);
}

TEST_CASE("constant column scores exactly zero") {
    Rng rng(1);
    Eigen::MatrixXd x(12, 3);
    for (Eigen::Index i = 0; i < 12; ++i) x.row(i) << rng.normal(), 4.0, rng.normal();
    std::vector<int> y;
    for (int i = 0; i < 12; ++i) y.push_back(i % 2);
    CHECK(relieff_rank(x, y, {.neighbors = 3}).scores[1] == 0.0);
    const auto all_const = relieff_rank(Eigen::MatrixXd::Constant(12, 2, 1.0), y, {.neighbors = 3});
    CHECK(all_const.degenerate);
}

TEST_CASE("matches brute-force enumeration bit for bit") {
    Rng rng(99);
    for (int t = 0; t < 60; ++t) {
        const std::size_t j = 1 + rng.below(3);
        const std::size_t n = 1 + rng.below(8);
        const std::size_t m = 2 * (j + 1) + rng.below(40 - 2 * (j + 1) + 1);
        Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        std::vector<int> y(m);
        for (std::size_t i = 0; i < m; ++i) {
            y[i] = i < j + 1 ? 0 : (i < 2 * (j + 1) ? 1 : static_cast<int>(rng.below(2)));
            for (std::size_t k = 0; k < n; ++k)
                // coarse grid values force distance ties
                x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                    t % 2 ? static_cast<double>(rng.below(4)) : rng.normal() + y[i];
        }
        const auto fast = relieff_rank(x, y, {.neighbors = j});
        const auto brute = oracle::relieff_brute(x, y, j);
        REQUIRE(fast.scores.size() == brute.size());
        for (std::size_t k = 0; k < n; ++k) CHECK(fast.scores[k] == brute[k]);
    }
}

TEST_CASE("positive selection") {
    CHECK(select_positive({{0.3, 0.0, -0.1}, false}) == std::vector<std::size_t>{0});
    CHECK(select_positive({{-0.3, -0.2}, false}).empty());
}

TEST_CASE("input checks") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 2);
    CHECK_THROWS_AS(relieff_rank(x, {0, 0, 0, 1, 1, 1}, {.neighbors = 3}), ValidationError);
    CHECK_THROWS_AS(relieff_rank(x, {0, 0, 0, 1, 1}, {.neighbors = 1}), ValidationError);
    CHECK_THROWS_AS(relieff_rank(x, {0, 0, 0, 1, 1, 2}, {.neighbors = 1}), ValidationError);
}

TEST_CASE("sampled variant is seeded") {
    Rng rng(5);
    Eigen::MatrixXd x(30, 4);
    std::vector<int> y;
    for (Eigen::Index i = 0; i < 30; ++i) {
        y.push_back(static_cast<int>(i % 2));
        for (Eigen::Index k = 0; k < 4; ++k) x(i, k) = rng.normal() + (k == 0 ? 2.0 * y.back() : 0.0);
    }
    ReliefFConfig c{.neighbors = 3, .samples = 15, .seed = 4, .discrete = {}};
    CHECK(relieff_rank(x, y, c).scores == relieff_rank(x, y, c).scores);
    const auto s = relieff_rank(x, y, c).scores;
    CHECK(s[0] > s[1]);
}
