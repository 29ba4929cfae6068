#include <doctest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>

#include "biomark/anova.hpp"
#include "biomark/error.hpp"
#include "biomark/rng.hpp"
#include "oracles.hpp"

using namespace biomark;
using namespace biomark::stats;

namespace {

Observations one_way(const std::vector<std::vector<double>>& groups) {
    Observations o;
    o.factor_names = {"g"};
    o.levels.resize(1);
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (double v : groups[g]) {
            o.levels[0].push_back("L" + std::to_string(g + 1));
            o.y.push_back(v);
        }
    return o;
}

double pooled_t(const std::vector<double>& a, const std::vector<double>& b, double* df) {
    auto mean = [](const std::vector<double>& v) { double s = 0; for (double x : v) s += x; return s / static_cast<double>(v.size()); };
    const double ma = mean(a), mb = mean(b);
    double ss = 0;
    for (double x : a) ss += (x - ma) * (x - ma);
    for (double x : b) ss += (x - mb) * (x - mb);
    *df = static_cast<double>(a.size() + b.size() - 2);
    const double s2 = ss / *df;
    return (ma - mb) / std::sqrt(s2 * (1.0 / static_cast<double>(a.size()) + 1.0 / static_cast<double>(b.size())));
}

}  // namespace

TEST_CASE("two groups: F = t^2") {
    const auto t = nway_anova(one_way({{1, 2, 3}, {3, 4, 5}}));
    REQUIRE(t.terms.size() == 1);
    CHECK(std::abs(t.terms[0].f - 6.0) < 1e-12);
    CHECK(t.terms[0].df == 1.0);
    CHECK(t.df_residual == 4.0);
    CHECK(std::abs(t.terms[0].ss - 6.0) < 1e-12);
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a, b;
        const std::size_t na = 2 + rng.below(10), nb = 2 + rng.below(10);
        for (std::size_t i = 0; i < na; ++i) a.push_back(rng.normal());
        for (std::size_t i = 0; i < nb; ++i) b.push_back(rng.normal(0.5, 1));
        double df = 0;
        const double tt = pooled_t(a, b, &df);
        const auto tab = nway_anova(one_way({a, b}));
        CHECK(std::abs(tab.terms[0].f - tt * tt) <= 1e-9 * std::max(1.0, tt * tt));
    }
}

TEST_CASE("constant response") {
    const auto t = nway_anova(one_way({{2, 2, 2}, {2, 2}}));
    CHECK(t.terms[0].ss == 0.0);
    CHECK(t.terms[0].f == 0.0);
    CHECK(t.terms[0].p == 1.0);
}

TEST_CASE("balanced two-way design: SS add up") {
    Rng rng(5);
    Observations o;
    o.factor_names = {"a", "b"};
    o.levels.resize(2);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j)
            for (int r = 0; r < 5; ++r) {
                o.levels[0].push_back("a" + std::to_string(i));
                o.levels[1].push_back("b" + std::to_string(j));
                o.y.push_back(0.3 * i - 0.2 * j + 0.1 * i * j + rng.normal());
            }
    const auto t = nway_anova(o, {{"a", "b"}});
    CHECK(t.balanced);
    REQUIRE(t.terms.size() == 3);
    double ss = t.ss_residual;
    for (const auto& term : t.terms) ss += term.ss;
    CHECK(std::abs(ss - t.ss_total) <= 1e-8 * t.ss_total);
    CHECK(t.terms[2].name == "a:b");
    CHECK(t.terms[2].df == 6.0);
    CHECK(t.df_residual == 48.0);
}

TEST_CASE("unbalanced designs are flagged") {
    Observations o = one_way({{1, 2, 3, 4}, {2, 3}});
    o.factor_names.push_back("h");
    o.levels.push_back({"x", "y", "x", "y", "x", "x"});
    const auto t = nway_anova(o);
    CHECK_FALSE(t.balanced);
    CHECK_FALSE(t.note.empty());
}

TEST_CASE("studentized range distribution") {
    CHECK(std::abs(studentized_range_critical(0.05, 2, kInfiniteDf) - std::sqrt(2.0) * 1.959964) < 5e-3);
    CHECK(std::abs(studentized_range_critical(0.05, 3, 12) - 3.77) < 0.02);
    // k = 2 identity: Q = sqrt(2)|t|
    boost::math::students_t t10(10);
    for (double q : {1.0, 2.5, 3.0, 4.5}) {
        const double p_t = 2 * boost::math::cdf(boost::math::complement(t10, q / std::sqrt(2.0)));
        CHECK(std::abs((1 - studentized_range_cdf(q, 2, 10)) - p_t) < 1e-6);
    }
    double prev = 0;
    for (int k = 2; k <= 8; ++k) {
        const double q = studentized_range_critical(0.05, k, 20);
        CHECK(q > prev);
        prev = q;
    }
    // a small Monte-Carlo cross-check (the 10^7-draw version lives in the acceptance suite)
    const double mc = oracle::studentized_range_mc(3.5, 4, 15, 200000, 17);
    CHECK(std::abs(mc - (1 - studentized_range_cdf(3.5, 4, 15))) < 4e-3);
}

TEST_CASE("Bonferroni and Tukey") {
    SUBCASE("two levels: no adjustment, Tukey equals the raw p") {
        const auto o = one_way({{1, 2, 3, 2.5}, {3, 4, 5, 3.5}});
        const auto b = bonferroni_pairwise(o, "g");
        REQUIRE(b.size() == 1);
        CHECK(b[0].p_adj == b[0].p_raw);
        const auto tk = tukey_hsd(o, "g");
        REQUIRE(tk.size() == 1);
        CHECK(std::abs(tk[0].p_adj - b[0].p_raw) < 1e-4);
        CHECK(b[0].diff == doctest::Approx(-1.75));
        CHECK(b[0].ci_low < b[0].diff);
        CHECK(b[0].ci_high > b[0].diff);
    }
    SUBCASE("identical means give p = 1") {
        const auto o = one_way({{1, 2, 3}, {3, 2, 1}, {2, 1, 3}});
        for (const auto& c : bonferroni_pairwise(o, "g")) CHECK(c.p_adj == 1.0);
        for (const auto& c : tukey_hsd(o, "g")) CHECK(c.p_adj > 0.999);
    }
    SUBCASE("four levels: six pairs, ordering of adjustments") {
        Rng rng(9);
        std::vector<std::vector<double>> g(4);
        for (std::size_t l = 0; l < 4; ++l)
            for (int i = 0; i < 8; ++i) g[l].push_back(rng.normal(0.4 * static_cast<double>(l), 1));
        const auto o = one_way(g);
        const auto b = bonferroni_pairwise(o, "g");
        const auto tk = tukey_hsd(o, "g");
        REQUIRE(b.size() == 6);
        REQUIRE(tk.size() == 6);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(b[i].p_adj >= tk[i].p_adj - 1e-9);
            CHECK(tk[i].p_adj >= b[i].p_raw - 1e-9);
        }
    }
    SUBCASE("one displaced group") {
        Rng rng(10);
        std::vector<std::vector<double>> g(3);
        for (std::size_t l = 0; l < 3; ++l)
            for (int i = 0; i < 10; ++i) g[l].push_back(rng.normal(l == 2 ? 6.0 : 0.0, 1));
        const auto o = one_way(g);
        for (const auto& c : tukey_hsd(o, "g")) {
            const bool involves = c.level_a == "L3" || c.level_b == "L3";
            CHECK((c.p_adj < 0.05) == involves);
        }
        for (const auto& c : bonferroni_pairwise(o, "g")) {
            const bool involves = c.level_a == "L3" || c.level_b == "L3";
            CHECK((c.p_adj < 0.05) == involves);
        }
    }
}

TEST_CASE("simultaneous coverage of Tukey intervals") {
    Rng rng(11);
    int covered = 0;
    const int sims = 2000;
    for (int s = 0; s < sims; ++s) {
        std::vector<std::vector<double>> g(4);
        for (auto& grp : g)
            for (int i = 0; i < 6; ++i) grp.push_back(rng.normal());
        bool all = true;
        for (const auto& c : tukey_hsd(one_way(g), "g")) all = all && c.ci_low <= 0.0 && c.ci_high >= 0.0;
        covered += all;
    }
    const double rate = static_cast<double>(covered) / sims;
    CHECK(rate > 0.93);
    CHECK(rate < 0.97);
}

TEST_CASE("p-value text and report rows") {
    CHECK(format_p(1e-15) == "< 1e-12");
    CHECK(format_p(0.25) == "0.25");
    CHECK(f_sf(0.0, 1, 10) == 1.0);
    const auto o = one_way({{1, 2, 3}, {3, 4, 5}});
    const auto t = nway_anova(o);
    const auto rows = report_rows("acc", t, bonferroni_pairwise(o, "g"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].contrast.find("F(1,4)") != std::string::npos);
    CHECK(rows[1].direction == "L1 < L2");
    CHECK(report_to_csv(rows).rfind("response,contrast,p_value,ci_low,ci_high,direction\n", 0) == 0);
}

TEST_CASE("observations from a long table") {
    const auto table = text::parse_csv(
        "config_id,classifier,sensor,correction,localization,replica,split,acc,sens,spec,auc\n"
        "a,GNB,MAG,none,,1,crossval,0.5,0.5,0.5,0.5\n"
        "a,GNB,MAG,none,,1,holdout,0.6,0.5,0.5,0.5\n"
        "b,KSVM,MAG,none,,1,holdout,0.7,0.5,0.5,0.5\n",
        "t");
    const auto o = observations_from_table(table, "acc", {"classifier"});
    CHECK(o.size() == 2);
    CHECK(o.y == std::vector<double>{0.6, 0.7});
    CHECK_THROWS_AS(observations_from_table(table, "precision", {"classifier"}), ValidationError);
}
