#include <algorithm>
#include <cmath>
#include <limits>

#include "biomark/classifiers.hpp"
#include "biomark/error.hpp"
#include "biomark/metrics.hpp"

namespace biomark::classify {

double glmnet_lambda_max(const Eigen::MatrixXd& x_std, std::span<const int> y, std::span<const double> weights,
                         double alpha, bool* degenerate) {
    if (!(alpha > 0.0) || alpha > 1.0) throw ValidationError("glmnet_lambda_max: alpha must be in (0, 1]");
    const auto n = static_cast<Eigen::Index>(y.size());
    if (x_std.rows() != n) throw ValidationError("glmnet_lambda_max: label count differs from row count");
    if (!weights.empty() && weights.size() != y.size())
        throw ValidationError("glmnet_lambda_max: weight count differs from row count");
    auto w = [&](Eigen::Index i) { return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)]; };
    double sw = 0.0, swy = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        sw += w(i);
        swy += w(i) * y[static_cast<std::size_t>(i)];
    }
    if (!(sw > 0.0)) throw ValidationError("glmnet_lambda_max: weights sum to zero");
    const double ybar = swy / sw;
    const bool constant = std::all_of(y.begin(), y.end(), [&](int v) { return v == y[0]; });
    if (degenerate) *degenerate = constant;
    if (constant) return 0.0;
    double best = 0.0;
    for (Eigen::Index j = 0; j < x_std.cols(); ++j) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += w(i) * x_std(i, j) * (y[static_cast<std::size_t>(i)] - ybar);
        best = std::max(best, std::abs(s));
    }
    return best / (sw * alpha);
}

std::vector<double> lambda_grid(double lambda_max, std::size_t n, double min_ratio) {
    if (n == 0) throw ValidationError("lambda_grid: need at least one point");
    if (!(lambda_max > 0.0)) throw ValidationError("lambda_grid: lambda_max must be positive");
    if (!(min_ratio > 0.0 && min_ratio < 1.0)) throw ValidationError("lambda_grid: ratio must be in (0, 1)");
    std::vector<double> out(n);
    out[0] = lambda_max;
    if (n == 1) return out;
    const double step = std::log(min_ratio) / static_cast<double>(n - 1);
    for (std::size_t t = 1; t < n; ++t) out[t] = lambda_max * std::exp(step * static_cast<double>(t));
    return out;
}

namespace {

double soft_threshold(double z, double g) {
    if (z > g) return z - g;
    if (z < -g) return z + g;
    return 0.0;
}

double deviance(const Eigen::VectorXd& eta, std::span<const int> y) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // -log p or -log(1 - p), computed without cancellation
        const double t = y[static_cast<std::size_t>(i)] == 1 ? -eta(i) : eta(i);
        d += t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    }
    return 2.0 * d;
}

struct PathSolver {
    const Eigen::MatrixXd& xs;  // standardized
    std::span<const int> y;
    const GlmnetOptions& opt;
    std::vector<char> usable;   // non-constant columns
    Eigen::Index n, p;

    Eigen::VectorXd beta;
    double b0 = 0.0;
    Eigen::VectorXd eta;
    std::vector<char> active;

    double objective(const Eigen::VectorXd& e, const Eigen::VectorXd& b, double lambda) const {
        return deviance(e, y) / (2.0 * static_cast<double>(n)) +
               lambda * (opt.alpha * b.lpNorm<1>() + 0.5 * (1.0 - opt.alpha) * b.squaredNorm());
    }

    void solve(double lambda, std::size_t index) {
        const double nd = static_cast<double>(n);
        const double l1 = lambda * opt.alpha;
        const double l2 = lambda * (1.0 - opt.alpha);
        const double inner_tol = opt.tolerance * 1e-2;
        const double coarse_tol = 1e-4;
        std::size_t sweeps = 0;
        bool majorize = false;
        Eigen::VectorXd w(n), r(n), v(p);
        double f_old = objective(eta, beta, lambda);

        auto count_sweep = [&] {
            if (++sweeps > opt.max_sweeps)
                throw ConvergenceError("glmnet: no convergence after " + std::to_string(opt.max_sweeps) +
                                       " coordinate sweeps at lambda index " + std::to_string(index));
        };

        for (;;) {
            const Eigen::VectorXd beta_prev = beta;
            const double b0_prev = b0;
            const Eigen::VectorXd eta_prev = eta;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double pi = logistic(eta(i));
                w(i) = majorize ? 0.25 : std::max(pi * (1.0 - pi), 1e-12);
                r(i) = (y[static_cast<std::size_t>(i)] - pi) / w(i);
            }
            const double sw = w.sum();
            for (Eigen::Index j = 0; j < p; ++j) v(j) = usable[static_cast<std::size_t>(j)] ? w.dot(xs.col(j).cwiseAbs2()) / nd : 0.0;

            // Coordinate descent restricted to the active set.
            auto descend = [&](double tol) {
                for (;;) {
                    count_sweep();
                    double max_change = 0.0;
                    for (Eigen::Index j = 0; j < p; ++j) {
                        if (!active[static_cast<std::size_t>(j)]) continue;
                        const double bj = beta(j);
                        const double g = (xs.col(j).array() * w.array() * r.array()).sum() / nd + v(j) * bj;
                        const double nb = soft_threshold(g, l1) / (v(j) + l2);
                        if (nb != bj) {
                            const double d = nb - bj;
                            beta(j) = nb;
                            r.noalias() -= d * xs.col(j);
                            max_change = std::max(max_change, std::abs(d) * std::sqrt(v(j)));
                        }
                    }
                    const double d0 = w.dot(r) / sw;
                    b0 += d0;
                    r.array() -= d0;
                    max_change = std::max(max_change, std::abs(d0) * std::sqrt(sw / nd));
                    if (max_change < tol) return;
                }
            };
            // Admits inactive columns that violate the optimality conditions.
            auto admit = [&] {
                const Eigen::VectorXd wr = w.cwiseProduct(r);
                bool added = false;
                for (Eigen::Index j = 0; j < p; ++j) {
                    if (active[static_cast<std::size_t>(j)] || !usable[static_cast<std::size_t>(j)]) continue;
                    if (std::abs(xs.col(j).dot(wr) / nd) > l1) {
                        active[static_cast<std::size_t>(j)] = 1;
                        added = true;
                    }
                }
                return added;
            };
            // Once the sign pattern has settled, the quadratic subproblem is a
            // linear system on the nonzero coefficients. Accepted only if the
            // signs survive and the zero coefficients stay optimal.
            auto solve_fixed_signs = [&] {
                std::vector<Eigen::Index> nz;
                for (Eigen::Index j = 0; j < p; ++j)
                    if (beta(j) != 0.0) nz.push_back(j);
                const auto m = static_cast<Eigen::Index>(nz.size()) + 1;
                if (m >= n) return false;
                Eigen::MatrixXd a(n, m);
                a.col(0).setOnes();
                for (Eigen::Index k = 1; k < m; ++k) a.col(k) = xs.col(nz[static_cast<std::size_t>(k - 1)]);
                const Eigen::VectorXd z = (xs * beta).array() + b0 + r.array();
                const Eigen::MatrixXd aw = w.cwiseSqrt().asDiagonal() * a;
                Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
                h.selfadjointView<Eigen::Lower>().rankUpdate(aw.transpose(), 1.0 / nd);
                Eigen::VectorXd rhs = a.transpose() * w.cwiseProduct(z) / nd;
                for (Eigen::Index k = 1; k < m; ++k) {
                    h(k, k) += l2;
                    rhs(k) -= l1 * (beta(nz[static_cast<std::size_t>(k - 1)]) > 0 ? 1.0 : -1.0);
                }
                const Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
                if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
                const Eigen::VectorXd sol = ldlt.solve(rhs);
                if (!sol.allFinite()) return false;
                for (Eigen::Index k = 1; k < m; ++k)
                    if ((sol(k) > 0) != (beta(nz[static_cast<std::size_t>(k - 1)]) > 0) || sol(k) == 0.0) return false;
                Eigen::VectorXd cand = Eigen::VectorXd::Zero(p);
                for (Eigen::Index k = 1; k < m; ++k) cand(nz[static_cast<std::size_t>(k - 1)]) = sol(k);
                const Eigen::VectorXd cand_r = z.array() - sol(0) - (xs * cand).array();
                const Eigen::VectorXd wr = w.cwiseProduct(cand_r);
                for (Eigen::Index j = 0; j < p; ++j)
                    if (cand(j) == 0.0 && active[static_cast<std::size_t>(j)] && std::abs(xs.col(j).dot(wr) / nd) > l1)
                        return false;
                count_sweep();
                beta = cand;
                b0 = sol(0);
                r = cand_r;
                return true;
            };

            double cd_tol = coarse_tol;
            for (;;) {
                descend(cd_tol);
                if (solve_fixed_signs()) {
                    if (!admit()) break;
                    cd_tol = coarse_tol;
                } else if (cd_tol > inner_tol) {
                    cd_tol = std::max(cd_tol * 0.1, inner_tol);
                } else if (!admit()) {
                    break;
                }
            }

            eta = (xs * beta).array() + b0;
            const double f_new = objective(eta, beta, lambda);
            if (!majorize && f_new > f_old + 1e-12 * std::max(1.0, std::abs(f_old))) {
                // Newton step overshot; redo the pass with the bounding quadratic.
                beta = beta_prev;
                b0 = b0_prev;
                eta = eta_prev;
                majorize = true;
                continue;
            }
            f_old = f_new;
            majorize = false;
            double change = std::abs(b0 - b0_prev);
            if (p > 0) change = std::max(change, (beta - beta_prev).cwiseAbs().maxCoeff());
            if (change < opt.tolerance) break;
        }
    }
};

}  // namespace

GlmnetPath glmnet_fit_path(const Eigen::MatrixXd& x, std::span<const int> y, const GlmnetOptions& options,
                           std::vector<double> lambdas) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (static_cast<std::size_t>(n) != y.size()) throw ValidationError("glmnet: label count differs from row count");
    if (n < 2) throw ValidationError("glmnet: need at least 2 rows");
    if (!(options.alpha > 0.0) || options.alpha > 1.0) throw ValidationError("glmnet: alpha must be in (0, 1]");
    if (!x.allFinite()) throw ValidationError("glmnet: non-finite feature value");
    std::size_t n1 = 0;
    for (int v : y) {
        if (v != 0 && v != 1) throw ValidationError("glmnet: labels must be 0 or 1");
        n1 += static_cast<std::size_t>(v);
    }
    if (n1 == 0 || n1 == y.size()) throw ValidationError("glmnet: training labels contain a single class");

    GlmnetPath path;
    path.alpha = options.alpha;
    path.center = x.colwise().mean().transpose();
    path.scale.resize(p);
    Eigen::MatrixXd xs(n, p);
    std::vector<char> usable(static_cast<std::size_t>(p), 0);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double sd = std::sqrt((x.col(j).array() - path.center(j)).square().mean());
        const bool ok = sd > 1e-12 * std::max(1.0, std::abs(path.center(j)));
        usable[static_cast<std::size_t>(j)] = ok;
        path.scale(j) = ok ? sd : 1.0;
        if (ok) xs.col(j) = (x.col(j).array() - path.center(j)) / sd;
        else xs.col(j).setZero();
    }
    path.lambda_max = glmnet_lambda_max(xs, y, {}, options.alpha);

    if (lambdas.empty()) {
        if (path.lambda_max > 0.0) {
            lambdas = lambda_grid(path.lambda_max, options.n_lambda, options.lambda_min_ratio);
        } else {
            lambdas = {0.0};
        }
    } else {
        for (std::size_t t = 0; t < lambdas.size(); ++t) {
            if (!(lambdas[t] >= 0.0) || !std::isfinite(lambdas[t])) throw ValidationError("glmnet: lambda must be finite and >= 0");
            if (t > 0 && !(lambdas[t] < lambdas[t - 1])) throw ValidationError("glmnet: lambda grid must be strictly decreasing");
        }
    }

    const double ybar = static_cast<double>(n1) / static_cast<double>(n);
    const double null_dev = deviance(Eigen::VectorXd::Constant(n, std::log(ybar / (1.0 - ybar))), y);

    PathSolver s{xs, y, options, usable, n, p, Eigen::VectorXd::Zero(p), std::log(ybar / (1.0 - ybar)),
                 Eigen::VectorXd(), std::vector<char>(static_cast<std::size_t>(p), 0)};
    s.eta = Eigen::VectorXd::Constant(n, s.b0);

    std::vector<Eigen::VectorXd> betas;
    std::vector<double> b0s;
    for (std::size_t t = 0; t < lambdas.size(); ++t) {
        const double lam = lambdas[t];
        if (lam >= path.lambda_max && path.lambda_max > 0.0) {
            // Null model is optimal; set it exactly rather than iterate to it.
            s.beta.setZero();
            s.b0 = std::log(ybar / (1.0 - ybar));
            s.eta.setConstant(s.b0);
            std::fill(s.active.begin(), s.active.end(), 0);
        } else {
            s.solve(lam, t);
        }
        betas.push_back(s.beta);
        b0s.push_back(s.b0);
        path.lambdas.push_back(lam);
        const double ratio = 1.0 - deviance(s.eta, y) / null_dev;
        path.deviance_ratio.push_back(ratio);
        if (options.stop_on_saturation && ratio >= 0.999 && t + 1 < lambdas.size()) {
            path.saturated = true;
            break;
        }
    }

    const auto L = static_cast<Eigen::Index>(path.lambdas.size());
    path.betas_std.resize(p, L);
    path.betas.resize(p, L);
    path.intercepts_std.resize(L);
    path.intercepts.resize(L);
    for (Eigen::Index t = 0; t < L; ++t) {
        const auto& b = betas[static_cast<std::size_t>(t)];
        path.betas_std.col(t) = b;
        path.intercepts_std(t) = b0s[static_cast<std::size_t>(t)];
        const Eigen::VectorXd bo = b.cwiseQuotient(path.scale);
        path.betas.col(t) = bo;
        path.intercepts(t) = b0s[static_cast<std::size_t>(t)] - bo.dot(path.center);
    }
    return path;
}

Eigen::MatrixXd glmnet_path_scores(const GlmnetPath& path, const Eigen::MatrixXd& x) {
    if (x.cols() != path.betas.rows()) throw ValidationError("glmnet: feature count differs from the model");
    Eigen::MatrixXd eta = x * path.betas;
    eta.rowwise() += path.intercepts.transpose();
    return eta.unaryExpr([](double t) { return logistic(t); });
}

std::size_t argmax_first(std::span<const double> values) {
    if (values.empty()) throw ValidationError("argmax_first: empty input");
    std::size_t best = 0;
    for (std::size_t t = 1; t < values.size(); ++t)
        if (values[t] > values[best]) best = t;
    return best;
}

std::size_t glmnet_pick_lambda(const GlmnetPath& path, const Eigen::MatrixXd& x_val, std::span<const int> y_val,
                               SelectionMetric metric) {
    if (y_val.empty() || x_val.rows() == 0) throw ValidationError("glmnet_pick_lambda: empty validation fold");
    if (static_cast<std::size_t>(x_val.rows()) != y_val.size())
        throw ValidationError("glmnet_pick_lambda: label count differs from row count");
    if (path.size() == 0) throw ValidationError("glmnet_pick_lambda: empty path");
    const Eigen::MatrixXd scores = glmnet_path_scores(path, x_val);
    std::vector<double> value(path.size());
    std::vector<double> col(static_cast<std::size_t>(scores.rows()));
    for (std::size_t t = 0; t < path.size(); ++t) {
        for (Eigen::Index i = 0; i < scores.rows(); ++i) col[static_cast<std::size_t>(i)] = scores(i, static_cast<Eigen::Index>(t));
        const StatBlock s = compute_metrics(y_val, col);
        value[t] = metric == SelectionMetric::AUC ? s.auc : s.acc;
    }
    return argmax_first(value);
}

GlmnetModel glmnet_select(GlmnetPath path, std::size_t chosen) {
    if (chosen >= path.size()) throw ValidationError("glmnet_select: lambda index out of range");
    GlmnetModel m;
    m.intercept = path.intercepts(static_cast<Eigen::Index>(chosen));
    m.beta = path.betas.col(static_cast<Eigen::Index>(chosen));
    m.chosen = chosen;
    m.path = std::move(path);
    return m;
}

}  // namespace biomark::classify
