#include "biomark/anova.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <mutex>
#include <optional>
#include <tuple>
#include <set>

#include "biomark/error.hpp"

namespace biomark::stats {

std::size_t Observations::factor_index(std::string_view name) const {
    for (std::size_t f = 0; f < factor_names.size(); ++f)
        if (factor_names[f] == name) return f;
    throw ValidationError("unknown factor '" + std::string(name) + "'");
}

Observations observations_from_table(const text::CsvTable& table, std::string_view response,
                                     const std::vector<std::string>& factors, std::string_view split) {
    auto column = [&](std::string_view name) {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end()) throw ValidationError("results table has no column '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - table.header.begin());
    };
    const std::size_t yc = column(response);
    std::vector<std::size_t> fc;
    for (const auto& f : factors) fc.push_back(column(f));
    const std::optional<std::size_t> sc = split.empty() ? std::nullopt : std::optional(column("split"));

    Observations obs;
    obs.factor_names = factors;
    obs.levels.resize(factors.size());
    for (const auto& row : table.rows) {
        if (sc && row.cells[*sc] != split) continue;
        double v = 0.0;
        if (!text::parse_double(row.cells[yc], v) || !std::isfinite(v))
            throw ValidationError("results line " + std::to_string(row.line) + ": non-numeric " + std::string(response));
        obs.y.push_back(v);
        for (std::size_t f = 0; f < fc.size(); ++f) obs.levels[f].push_back(row.cells[fc[f]]);
    }
    if (obs.y.empty()) throw ValidationError("results table has no rows for split '" + std::string(split) + "'");
    return obs;
}

namespace {

struct Design {
    Eigen::MatrixXd x;
    std::vector<std::string> term_names;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> term_cols;   // [begin, end)
};

std::vector<std::string> sorted_levels(const std::vector<std::string>& v) {
    std::set<std::string> s(v.begin(), v.end());
    return {s.begin(), s.end()};
}

Design build_design(const Observations& obs, const std::vector<std::pair<std::string, std::string>>& interactions) {
    const auto n = static_cast<Eigen::Index>(obs.size());
    std::vector<Eigen::MatrixXd> coded;
    for (std::size_t f = 0; f < obs.factor_names.size(); ++f) {
        if (obs.levels[f].size() != obs.size())
            throw ValidationError("factor '" + obs.factor_names[f] + "' has the wrong number of rows");
        const auto lv = sorted_levels(obs.levels[f]);
        if (lv.size() < 2) throw ValidationError("factor '" + obs.factor_names[f] + "' has a single level");
        std::map<std::string, Eigen::Index> index;
        for (std::size_t l = 0; l < lv.size(); ++l) index[lv[l]] = static_cast<Eigen::Index>(l);
        const auto last = static_cast<Eigen::Index>(lv.size()) - 1;
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, last);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index l = index[obs.levels[f][static_cast<std::size_t>(i)]];
            if (l == last) c.row(i).setConstant(-1.0);
            else c(i, l) = 1.0;
        }
        coded.push_back(std::move(c));
    }
    Design d;
    std::vector<Eigen::MatrixXd> blocks;
    blocks.push_back(Eigen::MatrixXd::Ones(n, 1));
    for (std::size_t f = 0; f < coded.size(); ++f) {
        d.term_names.push_back(obs.factor_names[f]);
        blocks.push_back(coded[f]);
    }
    for (const auto& [a, b] : interactions) {
        const auto& ca = coded[obs.factor_index(a)];
        const auto& cb = coded[obs.factor_index(b)];
        Eigen::MatrixXd c(n, ca.cols() * cb.cols());
        for (Eigen::Index i = 0; i < ca.cols(); ++i)
            for (Eigen::Index j = 0; j < cb.cols(); ++j) c.col(i * cb.cols() + j) = ca.col(i).cwiseProduct(cb.col(j));
        d.term_names.push_back(a + ":" + b);
        blocks.push_back(std::move(c));
    }
    Eigen::Index total = 0;
    for (const auto& b : blocks) total += b.cols();
    d.x.resize(n, total);
    Eigen::Index at = 0;
    for (std::size_t t = 0; t < blocks.size(); ++t) {
        d.x.middleCols(at, blocks[t].cols()) = blocks[t];
        if (t > 0) d.term_cols.emplace_back(at, at + blocks[t].cols());
        at += blocks[t].cols();
    }
    return d;
}

struct Fit {
    double rss = 0.0;
    Eigen::Index rank = 0;
};

Fit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    const Eigen::VectorXd b = qr.solve(y);
    return {(y - x * b).squaredNorm(), qr.rank()};
}

bool is_balanced(const Observations& obs) {
    std::map<std::vector<std::string>, std::size_t> cells;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        std::vector<std::string> key;
        for (const auto& f : obs.levels) key.push_back(f[i]);
        ++cells[key];
    }
    std::size_t expected = 1;
    for (const auto& f : obs.levels) expected *= sorted_levels(f).size();
    if (cells.size() != expected) return false;
    const std::size_t c0 = cells.begin()->second;
    return std::all_of(cells.begin(), cells.end(), [&](const auto& kv) { return kv.second == c0; });
}

}  // namespace

double f_sf(double f, double d1, double d2) {
    if (!(f > 0.0)) return 1.0;
    if (std::isinf(f)) return 0.0;
    return boost::math::ibetac(d1 / 2.0, d2 / 2.0, d1 * f / (d1 * f + d2));
}

AnovaTable nway_anova(const Observations& obs, const std::vector<std::pair<std::string, std::string>>& interactions) {
    if (obs.factor_names.empty()) throw ValidationError("nway_anova: no factors");
    for (double v : obs.y)
        if (!std::isfinite(v)) throw ValidationError("nway_anova: non-finite response");
    const Design d = build_design(obs, interactions);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(obs.y.data(), static_cast<Eigen::Index>(obs.y.size()));

    AnovaTable t;
    t.grand_mean = y.mean();
    t.ss_total = (y.array() - t.grand_mean).square().sum();
    t.balanced = is_balanced(obs);
    if (!t.balanced) t.note = "unbalanced design: marginal (drop-term) sums of squares reported";

    const Fit full = least_squares(d.x, y);
    t.df_residual = static_cast<double>(static_cast<Eigen::Index>(obs.size()) - full.rank);
    if (t.df_residual < 1) throw ValidationError("nway_anova: no residual degrees of freedom");
    t.ss_residual = full.rss;
    const double ms_res = t.ss_residual / t.df_residual;
    const double tiny = 1e-13 * std::max(t.ss_total, 1e-300);

    for (std::size_t k = 0; k < d.term_names.size(); ++k) {
        const auto [b, e] = d.term_cols[k];
        Eigen::MatrixXd reduced(d.x.rows(), d.x.cols() - (e - b));
        reduced << d.x.leftCols(b), d.x.rightCols(d.x.cols() - e);
        const Fit r = least_squares(reduced, y);
        AnovaTerm term;
        term.name = d.term_names[k];
        term.ss = std::max(0.0, r.rss - full.rss);
        term.df = static_cast<double>(full.rank - r.rank);
        if (term.ss <= tiny || term.df == 0) {
            term.f = 0.0;
            term.p = 1.0;
        } else if (ms_res <= 0.0) {
            term.f = std::numeric_limits<double>::infinity();
            term.p = 0.0;
        } else {
            term.f = (term.ss / term.df) / ms_res;
            term.p = f_sf(term.f, term.df, t.df_residual);
        }
        t.terms.push_back(term);
    }
    return t;
}

namespace {

struct Groups {
    std::vector<std::string> names;
    std::vector<double> mean;
    std::vector<double> count;
    double ms = 0.0;
    double df = 0.0;
};

Groups group_stats(const Observations& obs, std::string_view factor) {
    const std::size_t f = obs.factor_index(factor);
    Groups g;
    g.names = sorted_levels(obs.levels[f]);
    if (g.names.size() < 2) throw ValidationError("factor '" + std::string(factor) + "' needs at least 2 levels");
    std::map<std::string, std::size_t> idx;
    for (std::size_t l = 0; l < g.names.size(); ++l) idx[g.names[l]] = l;
    g.mean.assign(g.names.size(), 0.0);
    g.count.assign(g.names.size(), 0.0);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const std::size_t l = idx[obs.levels[f][i]];
        g.mean[l] += obs.y[i];
        g.count[l] += 1.0;
    }
    for (std::size_t l = 0; l < g.names.size(); ++l) g.mean[l] /= g.count[l];
    const AnovaTable t = nway_anova(obs);
    g.ms = t.ss_residual / t.df_residual;
    g.df = t.df_residual;
    return g;
}

}  // namespace

std::vector<PairwiseContrast> bonferroni_pairwise(const Observations& obs, std::string_view factor, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("bonferroni_pairwise: alpha must be in (0, 1)");
    const Groups g = group_stats(obs, factor);
    const std::size_t k = g.names.size();
    const double m = static_cast<double>(k * (k - 1) / 2);
    const boost::math::students_t dist(g.df);
    const double tcrit = boost::math::quantile(boost::math::complement(dist, alpha / (2.0 * m)));
    std::vector<PairwiseContrast> out;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
            PairwiseContrast c;
            c.factor = factor;
            c.level_a = g.names[a];
            c.level_b = g.names[b];
            c.method = "Bonferroni";
            c.diff = g.mean[a] - g.mean[b];
            const double se = std::sqrt(g.ms * (1.0 / g.count[a] + 1.0 / g.count[b]));
            if (se > 0.0) {
                const double t = std::abs(c.diff) / se;
                c.p_raw = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
            } else {
                c.p_raw = c.diff == 0.0 ? 1.0 : 0.0;
            }
            c.p_adj = std::min(1.0, m * c.p_raw);
            c.ci_low = c.diff - tcrit * se;
            c.ci_high = c.diff + tcrit * se;
            out.push_back(c);
        }
    return out;
}

std::vector<PairwiseContrast> tukey_hsd(const Observations& obs, std::string_view factor, double alpha, std::string* note) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("tukey_hsd: alpha must be in (0, 1)");
    const Groups g = group_stats(obs, factor);
    const int k = static_cast<int>(g.names.size());
    const bool equal = std::all_of(g.count.begin(), g.count.end(), [&](double c) { return c == g.count[0]; });
    if (note) *note = equal ? "" : "unequal group sizes: Tukey-Kramer intervals";
    const double qcrit = studentized_range_critical(alpha, k, g.df);
    const boost::math::students_t dist(g.df);
    std::vector<PairwiseContrast> out;
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) {
            PairwiseContrast c;
            c.factor = factor;
            c.level_a = g.names[static_cast<std::size_t>(a)];
            c.level_b = g.names[static_cast<std::size_t>(b)];
            c.method = "TukeyHSD";
            const double na = g.count[static_cast<std::size_t>(a)], nb = g.count[static_cast<std::size_t>(b)];
            c.diff = g.mean[static_cast<std::size_t>(a)] - g.mean[static_cast<std::size_t>(b)];
            const double se = std::sqrt(g.ms / 2.0 * (1.0 / na + 1.0 / nb));
            if (se > 0.0) {
                const double q = std::abs(c.diff) / se;
                c.p_raw = 2.0 * boost::math::cdf(boost::math::complement(dist, q / std::numbers::sqrt2));
                c.p_adj = std::clamp(1.0 - studentized_range_cdf(q, k, g.df), 0.0, 1.0);
            } else {
                c.p_raw = c.p_adj = c.diff == 0.0 ? 1.0 : 0.0;
            }
            c.ci_low = c.diff - qcrit * se;
            c.ci_high = c.diff + qcrit * se;
            out.push_back(c);
        }
    return out;
}

namespace {

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double big_phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// P(range of k standard normals <= w).
double range_cdf(double w, int k) {
    if (w <= 0.0) return 0.0;
    auto f = [&](double z) {
        const double d = big_phi(z) - big_phi(z - w);
        return d <= 0.0 ? 0.0 : phi(z) * std::pow(d, k - 1);
    };
    double err = 0.0;
    // The integrand is negligible outside [-8.5, 8.5 + w].
    const double v = static_cast<double>(k) *
                     boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -8.5, 8.5 + w, 12, 1e-12, &err);
    if (!(err <= 1e-8)) throw NumericalError("studentized range: inner integration did not converge");
    return std::clamp(v, 0.0, 1.0);
}

}  // namespace

double studentized_range_cdf(double q, int k, double df) {
    if (k < 2) throw ValidationError("studentized range: k must be >= 2");
    if (!(df >= 1.0)) throw ValidationError("studentized range: df must be >= 1");
    if (!(q > 0.0)) return 0.0;
    if (std::isinf(df)) return range_cdf(q, k);
    // s = sqrt(chi2_df / df); integrate over its central mass.
    const boost::math::chi_squared chi(df);
    const double s_lo = std::sqrt(boost::math::quantile(chi, 1e-14) / df);
    const double s_hi = std::sqrt(boost::math::quantile(boost::math::complement(chi, 1e-14)) / df);
    const double log_norm = (df / 2.0) * std::log(df / 2.0) - boost::math::lgamma(df / 2.0) + std::log(2.0);
    auto density = [&](double s) {
        if (s <= 0.0) return 0.0;
        return std::exp(log_norm + (df - 1.0) * std::log(s) - df * s * s / 2.0);
    };
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double s) { return density(s) * range_cdf(q * s, k); }, s_lo, s_hi, 12, 1e-10, &err);
    if (!(err <= 1e-6)) throw NumericalError("studentized range: outer integration did not converge");
    return std::clamp(v, 0.0, 1.0);
}

double studentized_range_critical(double alpha, int k, double df) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("studentized range: alpha must be in (0, 1)");
    // Post-hoc loops ask for the same quantile over and over.
    static std::mutex mu;
    static std::map<std::tuple<double, int, double>, double> cache;
    const auto key = std::make_tuple(alpha, k, df);
    {
        std::lock_guard lock(mu);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    auto f = [&](double q) { return studentized_range_cdf(q, k, df) - (1.0 - alpha); };
    double lo = 0.0, hi = 1.0;
    while (f(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) throw NumericalError("studentized range: quantile search diverged");
    }
    std::uintmax_t iters = 100;
    const auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(40), iters);
    const double q = 0.5 * (r.first + r.second);
    std::lock_guard lock(mu);
    cache.emplace(key, q);
    return q;
}

std::string format_p(double p) {
    if (p < 1e-12) return "< 1e-12";
    return text::format_double(p);
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

std::vector<ReportRow> report_rows(std::string_view response, const AnovaTable& table,
                                   const std::vector<PairwiseContrast>& contrasts) {
    std::vector<ReportRow> rows;
    for (const auto& t : table.terms) {
        ReportRow r;
        r.response = response;
        r.contrast = t.name + " F(" + fmt("%.0f", t.df) + "," + fmt("%.0f", table.df_residual) + ")=" + fmt("%.6g", t.f);
        r.p_value = t.p;
        rows.push_back(r);
    }
    for (const auto& c : contrasts) {
        ReportRow r;
        r.response = response;
        r.contrast = c.factor + ": " + c.level_a + " - " + c.level_b + " [" + c.method + "]";
        r.p_value = c.p_adj;
        r.ci_low = c.ci_low;
        r.ci_high = c.ci_high;
        r.direction = c.diff > 0 ? c.level_a + " > " + c.level_b : c.diff < 0 ? c.level_a + " < " + c.level_b : "=";
        rows.push_back(r);
    }
    return rows;
}

std::string report_to_csv(const std::vector<ReportRow>& rows) {
    std::string out = "response,contrast,p_value,ci_low,ci_high,direction\n";
    auto num = [](double v) { return std::isnan(v) ? std::string() : text::format_double(v); };
    for (const auto& r : rows)
        out += text::csv_join({r.response, r.contrast, format_p(r.p_value), num(r.ci_low), num(r.ci_high), r.direction}) + "\n";
    return out;
}

}  // namespace biomark::stats
