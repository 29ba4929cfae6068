#include <algorithm>
#include <cmath>
#include <limits>

#include "biomark/classifiers.hpp"
#include "biomark/error.hpp"
#include "biomark/folds.hpp"
#include "biomark/metrics.hpp"

namespace biomark::classify {

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm();
    const Eigen::VectorXd nb = b.rowwise().squaredNorm();
    Eigen::MatrixXd k = -2.0 * (a * b.transpose());
    for (Eigen::Index j = 0; j < k.cols(); ++j)
        for (Eigen::Index i = 0; i < k.rows(); ++i) k(i, j) = std::exp(-gamma * std::max(0.0, k(i, j) + na(i) + nb(j)));
    return k;
}

SmoResult smo_solve(const Eigen::MatrixXd& kernel, std::span<const int> labels, double cost, double tolerance,
                    std::size_t max_iterations) {
    const auto n = static_cast<Eigen::Index>(labels.size());
    if (kernel.rows() != n || kernel.cols() != n) throw ValidationError("smo_solve: kernel shape mismatch");
    if (!(cost > 0)) throw ValidationError("smo_solve: box constraint C must be positive");
    std::vector<double> y(static_cast<std::size_t>(n));
    bool has[2] = {false, false};
    for (Eigen::Index i = 0; i < n; ++i) {
        const int v = labels[static_cast<std::size_t>(i)];
        if (v != 0 && v != 1) throw ValidationError("smo_solve: labels must be 0 or 1");
        has[v] = true;
        y[static_cast<std::size_t>(i)] = v == 1 ? 1.0 : -1.0;
    }
    if (!has[0] || !has[1]) throw ValidationError("smo_solve: training set contains a single class");

    constexpr double tau = 1e-12;
    const double inf = std::numeric_limits<double>::infinity();
    SmoResult res;
    res.alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd& a = res.alpha;
    Eigen::VectorXd grad = Eigen::VectorXd::Constant(n, -1.0);
    auto q = [&](Eigen::Index i, Eigen::Index j) { return y[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(j)] * kernel(i, j); };
    auto yi = [&](Eigen::Index i) { return y[static_cast<std::size_t>(i)]; };

    for (;;) {
        // Working-set selection, second-order information (Fan, Chen & Lin).
        double gmax = -inf;
        Eigen::Index i_sel = -1;
        for (Eigen::Index t = 0; t < n; ++t) {
            if (yi(t) > 0) {
                if (a(t) < cost && -grad(t) >= gmax) {
                    gmax = -grad(t);
                    i_sel = t;
                }
            } else if (a(t) > 0 && grad(t) >= gmax) {
                gmax = grad(t);
                i_sel = t;
            }
        }
        double gmax2 = -inf;
        Eigen::Index j_sel = -1;
        double best = inf;
        for (Eigen::Index t = 0; t < n; ++t) {
            if (yi(t) > 0) {
                if (a(t) > 0) {
                    const double gd = gmax + grad(t);
                    gmax2 = std::max(gmax2, grad(t));
                    if (i_sel >= 0 && gd > 0) {
                        double quad = kernel(i_sel, i_sel) + kernel(t, t) - 2.0 * yi(i_sel) * q(i_sel, t);
                        if (quad <= 0) quad = tau;
                        const double obj = -(gd * gd) / quad;
                        if (obj <= best) {
                            best = obj;
                            j_sel = t;
                        }
                    }
                }
            } else if (a(t) < cost) {
                const double gd = gmax - grad(t);
                gmax2 = std::max(gmax2, -grad(t));
                if (i_sel >= 0 && gd > 0) {
                    double quad = kernel(i_sel, i_sel) + kernel(t, t) + 2.0 * yi(i_sel) * q(i_sel, t);
                    if (quad <= 0) quad = tau;
                    const double obj = -(gd * gd) / quad;
                    if (obj <= best) {
                        best = obj;
                        j_sel = t;
                    }
                }
            }
        }
        if (gmax + gmax2 < tolerance || j_sel < 0) break;
        if (res.iterations++ >= max_iterations)
            throw ConvergenceError("smo_solve: no convergence after " + std::to_string(max_iterations) + " iterations");

        const Eigen::Index i = i_sel, j = j_sel;
        const double old_ai = a(i), old_aj = a(j);
        if (yi(i) != yi(j)) {
            double quad = kernel(i, i) + kernel(j, j) + 2.0 * q(i, j);
            if (quad <= 0) quad = tau;
            const double delta = (-grad(i) - grad(j)) / quad;
            const double diff = a(i) - a(j);
            a(i) += delta;
            a(j) += delta;
            if (diff > 0) {
                if (a(j) < 0) {
                    a(j) = 0;
                    a(i) = diff;
                }
            } else if (a(i) < 0) {
                a(i) = 0;
                a(j) = -diff;
            }
            if (diff > 0) {
                if (a(i) > cost) {
                    a(i) = cost;
                    a(j) = cost - diff;
                }
            } else if (a(j) > cost) {
                a(j) = cost;
                a(i) = cost + diff;
            }
        } else {
            double quad = kernel(i, i) + kernel(j, j) - 2.0 * q(i, j);
            if (quad <= 0) quad = tau;
            const double delta = (grad(i) - grad(j)) / quad;
            const double sum = a(i) + a(j);
            a(i) -= delta;
            a(j) += delta;
            if (sum > cost) {
                if (a(i) > cost) {
                    a(i) = cost;
                    a(j) = sum - cost;
                }
            } else if (a(j) < 0) {
                a(j) = 0;
                a(i) = sum;
            }
            if (sum > cost) {
                if (a(j) > cost) {
                    a(j) = cost;
                    a(i) = sum - cost;
                }
            } else if (a(i) < 0) {
                a(i) = 0;
                a(j) = sum;
            }
        }
        const double dai = a(i) - old_ai, daj = a(j) - old_aj;
        for (Eigen::Index t = 0; t < n; ++t) grad(t) += q(t, i) * dai + q(t, j) * daj;
    }

    // Bias from free vectors, or the midpoint of the feasible interval.
    double ub = inf, lb = -inf, sum_free = 0.0;
    std::size_t n_free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = yi(t) * grad(t);
        if (a(t) >= cost) {
            if (yi(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (a(t) <= 0) {
            if (yi(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    res.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
    return res;
}

namespace {

KsvmModel model_from_dual(const Eigen::MatrixXd& x, std::span<const int> y, const SmoResult& r, double gamma,
                          double cost) {
    KsvmModel m;
    m.gamma = gamma;
    m.cost = cost;
    m.bias = -r.rho;
    for (Eigen::Index i = 0; i < r.alpha.size(); ++i)
        if (r.alpha(i) > 0) m.support_indices.push_back(static_cast<std::size_t>(i));
    m.support.resize(static_cast<Eigen::Index>(m.support_indices.size()), x.cols());
    m.dual_coef.resize(static_cast<Eigen::Index>(m.support_indices.size()));
    for (std::size_t k = 0; k < m.support_indices.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(m.support_indices[k]);
        m.support.row(static_cast<Eigen::Index>(k)) = x.row(i);
        m.dual_coef(static_cast<Eigen::Index>(k)) = r.alpha(i) * (y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0);
    }
    return m;
}

}  // namespace

KsvmModel ksvm_fit_fixed(const Eigen::MatrixXd& x, std::span<const int> y, double gamma, double cost,
                         const KsvmOptions& options) {
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw ValidationError("ksvm_fit: label count differs from row count");
    const Eigen::MatrixXd k = rbf_kernel(x, x, gamma);
    const auto r = smo_solve(k, y, cost, options.tolerance, options.max_iterations);
    return model_from_dual(x, y, r, gamma, cost);
}

KsvmModel ksvm_fit(const Eigen::MatrixXd& x, std::span<const int> y, const ClassifierSpec& spec) {
    const auto& o = spec.ksvm;
    if (o.gammas.empty() || o.costs.empty()) throw ValidationError("ksvm_fit: empty hyperparameter grid");
    if (o.gammas.size() == 1 && o.costs.size() == 1) return ksvm_fit_fixed(x, y, o.gammas[0], o.costs[0], o);

    const std::size_t folds = 5;
    const FoldPlan plan = partition(y.size(), folds, spec.seed, y);
    std::vector<double> score(o.gammas.size() * o.costs.size(), 0.0);
    for (std::size_t g = 0; g < o.gammas.size(); ++g) {
        const Eigen::MatrixXd kfull = rbf_kernel(x, x, o.gammas[g]);
        for (std::size_t f = 0; f < folds; ++f) {
            const auto tr = plan.rows_not_in({f});
            const auto te = plan.rows_in(f);
            Eigen::MatrixXd ktr(static_cast<Eigen::Index>(tr.size()), static_cast<Eigen::Index>(tr.size()));
            for (std::size_t a = 0; a < tr.size(); ++a)
                for (std::size_t b = 0; b < tr.size(); ++b)
                    ktr(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        kfull(static_cast<Eigen::Index>(tr[a]), static_cast<Eigen::Index>(tr[b]));
            std::vector<int> ytr, yte;
            for (auto i : tr) ytr.push_back(y[i]);
            for (auto i : te) yte.push_back(y[i]);
            for (std::size_t c = 0; c < o.costs.size(); ++c) {
                const auto r = smo_solve(ktr, ytr, o.costs[c], o.tolerance, o.max_iterations);
                std::vector<double> s(te.size());
                for (std::size_t t = 0; t < te.size(); ++t) {
                    double d = -r.rho;
                    for (std::size_t a = 0; a < tr.size(); ++a)
                        if (r.alpha(static_cast<Eigen::Index>(a)) > 0)
                            d += r.alpha(static_cast<Eigen::Index>(a)) * (ytr[a] == 1 ? 1.0 : -1.0) *
                                 kfull(static_cast<Eigen::Index>(te[t]), static_cast<Eigen::Index>(tr[a]));
                    s[t] = logistic(d);
                }
                const auto st = compute_metrics(yte, s);
                score[g * o.costs.size() + c] += spec.metric == SelectionMetric::AUC ? st.auc : st.acc;
            }
        }
    }
    const std::size_t best = argmax_first(score);
    return ksvm_fit_fixed(x, y, o.gammas[best / o.costs.size()], o.costs[best % o.costs.size()], o);
}

Eigen::VectorXd ksvm_decision(const KsvmModel& m, const Eigen::MatrixXd& x) {
    if (m.support.rows() == 0) return Eigen::VectorXd::Constant(x.rows(), m.bias);
    if (x.cols() != m.support.cols()) throw ValidationError("ksvm_decision: feature count differs from the model");
    const Eigen::MatrixXd k = rbf_kernel(x, m.support, m.gamma);
    return (k * m.dual_coef).array() + m.bias;
}

Eigen::VectorXd ksvm_predict(const KsvmModel& m, const Eigen::MatrixXd& x) {
    Eigen::VectorXd d = ksvm_decision(m, x);
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = logistic(d(i));
    return d;
}

}  // namespace biomark::classify
