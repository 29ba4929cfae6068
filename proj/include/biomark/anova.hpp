#pragma once

#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "biomark/text.hpp"

namespace biomark::stats {

/// One response with its factor levels, row-aligned.
struct Observations {
    std::vector<std::string> factor_names;
    std::vector<std::vector<std::string>> levels;   // [factor][row]
    std::vector<double> y;

    std::size_t size() const { return y.size(); }
    std::size_t factor_index(std::string_view name) const;
};

/// Pulls `response` and the factor columns out of a long-format results table,
/// keeping only rows of the given split (empty = all rows).
Observations observations_from_table(const text::CsvTable& table, std::string_view response,
                                     const std::vector<std::string>& factors, std::string_view split = "holdout");

struct AnovaTerm {
    std::string name;          // factor, or "a:b" for an interaction
    double ss = 0.0;
    double df = 0.0;
    double f = 0.0;
    double p = 1.0;
};

struct AnovaTable {
    std::vector<AnovaTerm> terms;
    double ss_residual = 0.0;
    double df_residual = 0.0;
    double ss_total = 0.0;
    double grand_mean = 0.0;
    bool balanced = true;
    std::string note;          // set for unbalanced designs
};

/// Fixed-effects model with sum-to-zero coding; each term's SS is the
/// increase in residual SS when that term is dropped from the full model.
/// On balanced designs this equals the sequential SS.
AnovaTable nway_anova(const Observations& obs, const std::vector<std::pair<std::string, std::string>>& interactions = {});

struct PairwiseContrast {
    std::string factor;
    std::string level_a;
    std::string level_b;
    double diff = 0.0;         // mean(a) - mean(b)
    double p_raw = 1.0;
    double p_adj = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    std::string method;        // "Bonferroni" or "TukeyHSD"
};

/// All level pairs with two-sided t tests on the pooled residual MS of the
/// main-effects model; p_adj = min(1, m p_raw), CI at level 1 - alpha/m.
std::vector<PairwiseContrast> bonferroni_pairwise(const Observations& obs, std::string_view factor, double alpha = 0.05);

/// Tukey HSD (Tukey-Kramer for unequal group sizes) on the same pooled MS.
std::vector<PairwiseContrast> tukey_hsd(const Observations& obs, std::string_view factor, double alpha = 0.05,
                                        std::string* note = nullptr);

inline constexpr double kInfiniteDf = std::numeric_limits<double>::infinity();

/// P(Q <= q) for the studentized range of k normals with df degrees of
/// freedom (df may be infinite).
double studentized_range_cdf(double q, int k, double df);
/// Upper-alpha quantile by bisection on the CDF.
double studentized_range_critical(double alpha, int k, double df);

/// Upper tail of F(d1, d2) via the regularized incomplete beta function.
double f_sf(double f, double d1, double d2);

/// "< 1e-12" below the floor, shortest round-trip text otherwise.
std::string format_p(double p);

/// Report rows: response, contrast, p_value, ci_low, ci_high, direction.
struct ReportRow {
    std::string response;
    std::string contrast;
    double p_value = 1.0;
    double ci_low = std::numeric_limits<double>::quiet_NaN();
    double ci_high = std::numeric_limits<double>::quiet_NaN();
    std::string direction;
};

std::vector<ReportRow> report_rows(std::string_view response, const AnovaTable& table,
                                   const std::vector<PairwiseContrast>& contrasts);
std::string report_to_csv(const std::vector<ReportRow>& rows);

inline constexpr std::string_view kReplicaCaveat =
    "Monte-Carlo replicas reuse the same participants, so replicas are not independent observations and these "
    "p-values are optimistic.";

}  // namespace biomark::stats
