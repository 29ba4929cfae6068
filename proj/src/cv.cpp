#include "biomark/cv.hpp"

#include <cmath>

#include "biomark/error.hpp"
#include "biomark/folds.hpp"
#include "biomark/parallel.hpp"
#include "biomark/relieff.hpp"
#include "biomark/rng.hpp"
#include "biomark/text.hpp"

namespace biomark::cv {

using classify::ClassifierKind;
using harmonize::CorrectionType;

bool RunConfig::use_ffsel() const { return ffsel.value_or(classifier.kind != ClassifierKind::GLMNET); }

void RunConfig::validate() const {
    if (k < 3) throw ValidationError("run config '" + config_id + "': K must be >= 3 (got " + std::to_string(k) + ")");
    if (replicas < 1) throw ValidationError("run config '" + config_id + "': R must be >= 1");
    if (relieff_neighbors < 1) throw ValidationError("run config '" + config_id + "': ReliefF neighbors must be >= 1");
    if (classifier.ksvm.gammas.empty() || classifier.ksvm.costs.empty())
        throw ValidationError("run config '" + config_id + "': empty KSVM grid");
    if (classifier.glmnet.n_lambda < 1) throw ValidationError("run config '" + config_id + "': empty lambda grid");
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

Eigen::MatrixXd take_cols(const Eigen::MatrixXd& x, std::span<const std::size_t> idx) {
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(idx[j]));
    return out;
}

std::vector<int> take(std::span<const int> v, std::span<const std::size_t> idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

double metric_of(const StatBlock& s, classify::SelectionMetric m) {
    return m == classify::SelectionMetric::AUC ? s.auc : s.acc;
}

StatBlock score_block(std::span<const int> y, const Eigen::VectorXd& s) {
    return compute_metrics(y, std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
}

void accumulate(StatBlock& a, const StatBlock& b) {
    a.acc += b.acc;
    a.sens += b.sens;
    a.spec += b.spec;
    a.auc += b.auc;
}

void divide(StatBlock& a, double d) {
    a.acc /= d;
    a.sens /= d;
    a.spec /= d;
    a.auc /= d;
}

/// Correction fitted on bus_Data only, then applied to both partitions.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> correct(const RunConfig& cfg, const DatasetBundle& bus,
                                                    const DatasetBundle& hold) {
    if (cfg.correction == CorrectionType::None) {
        const auto z = harmonize::fit_plain_zscore(bus.features());
        return {harmonize::apply_plain_zscore(bus.features(), z).values(),
                harmonize::apply_plain_zscore(hold.features(), z).values()};
    }
    const auto g = harmonize::fit_grouped(bus, cfg.correction, cfg.rosters);
    FeatureMatrix tr = harmonize::apply_grouped(bus, g);
    FeatureMatrix te = harmonize::apply_grouped(hold, g);
    if (cfg.classifier.kind == ClassifierKind::KSVM) {
        // The RBF width grid assumes unit-variance inputs.
        const auto z = harmonize::fit_plain_zscore(tr);
        tr = harmonize::apply_plain_zscore(tr, z);
        te = harmonize::apply_plain_zscore(te, z);
    }
    return {tr.values(), te.values()};
}

struct InnerFolds {
    std::vector<std::vector<std::size_t>> train;  // bus-local row indices
    std::vector<std::vector<std::size_t>> test;
};

InnerFolds inner_folds(const FoldPlan& plan, std::size_t k, std::span<const std::size_t> bus_rows) {
    InnerFolds f;
    for (std::size_t l = 0; l < plan.k; ++l) {
        if (l == k) continue;
        std::vector<std::size_t> tr, te;
        for (std::size_t i = 0; i < bus_rows.size(); ++i) (plan.fold_of[bus_rows[i]] == l ? te : tr).push_back(i);
        f.train.push_back(std::move(tr));
        f.test.push_back(std::move(te));
    }
    return f;
}

classify::GlmnetModel select_glmnet(const classify::ClassifierSpec& spec, const Eigen::MatrixXd& x,
                                    std::span<const int> y, const InnerFolds& folds) {
    const auto& o = spec.glmnet;
    // One lambda grid from bus_Data so inner-fold stats line up by index.
    Eigen::MatrixXd xs(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double m = x.col(j).mean();
        const double sd = std::sqrt((x.col(j).array() - m).square().mean());
        if (sd > 1e-12 * std::max(1.0, std::abs(m))) xs.col(j) = (x.col(j).array() - m) / sd;
        else xs.col(j).setZero();
    }
    const double lmax = classify::glmnet_lambda_max(xs, y, {}, o.alpha);
    if (!(lmax > 0.0)) {
        auto path = classify::glmnet_fit_path(x, y, o);
        return classify::glmnet_select(std::move(path), 0);
    }
    const auto grid = classify::lambda_grid(lmax, o.n_lambda, o.lambda_min_ratio);
    std::vector<double> total(grid.size(), 0.0);
    for (std::size_t f = 0; f < folds.train.size(); ++f) {
        const auto ytr = take(y, folds.train[f]);
        const auto yte = take(y, folds.test[f]);
        const auto path = classify::glmnet_fit_path(take_rows(x, folds.train[f]), ytr, o, grid);
        Eigen::MatrixXd s = classify::glmnet_path_scores(path, take_rows(x, folds.test[f]));
        // grid[0] is the bus_Data lambda_max, where the refit is the null model.
        // An inner fold can have a larger lambda_max and a nonzero fit there, so
        // score the head as the null model it stands for.
        const double ybar = static_cast<double>(std::count(ytr.begin(), ytr.end(), 1)) / static_cast<double>(ytr.size());
        s.col(0).setConstant(ybar);
        double last = 0.0;
        for (std::size_t t = 0; t < grid.size(); ++t) {
            // A saturated path keeps its final fit for the remaining lambdas.
            if (t < path.size()) last = metric_of(score_block(yte, s.col(static_cast<Eigen::Index>(t))), spec.metric);
            total[t] += last;
        }
    }
    const std::size_t chosen = classify::argmax_first(total);
    std::vector<double> prefix(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(chosen) + 1);
    auto path = classify::glmnet_fit_path(x, y, o, std::move(prefix));
    const std::size_t last = path.size() - 1;
    return classify::glmnet_select(std::move(path), last);
}

classify::KsvmModel select_ksvm(const classify::ClassifierSpec& spec, const Eigen::MatrixXd& x,
                                std::span<const int> y, const InnerFolds& folds) {
    const auto& o = spec.ksvm;
    const std::size_t nc = o.costs.size();
    std::vector<double> total(o.gammas.size() * nc, 0.0);
    for (std::size_t g = 0; g < o.gammas.size(); ++g) {
        const Eigen::MatrixXd kfull = classify::rbf_kernel(x, x, o.gammas[g]);
        for (std::size_t f = 0; f < folds.train.size(); ++f) {
            const auto& tr = folds.train[f];
            const auto& te = folds.test[f];
            Eigen::MatrixXd ktr(static_cast<Eigen::Index>(tr.size()), static_cast<Eigen::Index>(tr.size()));
            for (std::size_t b = 0; b < tr.size(); ++b)
                for (std::size_t a = 0; a < tr.size(); ++a)
                    ktr(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        kfull(static_cast<Eigen::Index>(tr[a]), static_cast<Eigen::Index>(tr[b]));
            Eigen::MatrixXd kte(static_cast<Eigen::Index>(te.size()), static_cast<Eigen::Index>(tr.size()));
            for (std::size_t b = 0; b < tr.size(); ++b)
                for (std::size_t a = 0; a < te.size(); ++a)
                    kte(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        kfull(static_cast<Eigen::Index>(te[a]), static_cast<Eigen::Index>(tr[b]));
            const auto ytr = take(y, tr);
            const auto yte = take(y, te);
            Eigen::VectorXd signed_y(static_cast<Eigen::Index>(tr.size()));
            for (std::size_t a = 0; a < tr.size(); ++a) signed_y(static_cast<Eigen::Index>(a)) = ytr[a] == 1 ? 1.0 : -1.0;
            for (std::size_t c = 0; c < nc; ++c) {
                const auto r = classify::smo_solve(ktr, ytr, o.costs[c], o.tolerance, o.max_iterations);
                Eigen::VectorXd d = kte * r.alpha.cwiseProduct(signed_y);
                d.array() -= r.rho;
                const Eigen::VectorXd s = d.unaryExpr([](double t) { return classify::logistic(t); });
                total[g * nc + c] += metric_of(score_block(yte, s), spec.metric);
            }
        }
    }
    const std::size_t best = classify::argmax_first(total);
    return classify::ksvm_fit_fixed(x, y, o.gammas[best / nc], o.costs[best % nc], o);
}

[[noreturn]] void rethrow_with_context(const std::string& ctx) {
    try {
        throw;
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(ctx + e.what());
    } catch (const NumericalError& e) {
        throw NumericalError(ctx + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(ctx + e.what());
    } catch (const std::exception& e) {
        throw Error(ctx + e.what());
    }
}

}  // namespace

ReplicaResult nested_cv_run(const RunConfig& cfg, const DatasetBundle& data, std::uint64_t seed) {
    cfg.validate();
    const auto& labels = data.labels().values;
    const FoldPlan plan = partition(data.size(), cfg.k, seed, labels);
    const auto p = static_cast<Eigen::Index>(data.features().cols());

    ReplicaResult out;
    out.seed = seed;
    if (cfg.classifier.kind == ClassifierKind::GLMNET) out.coefficients = Eigen::MatrixXd::Zero(p, static_cast<Eigen::Index>(cfg.k));

    for (std::size_t k = 0; k < cfg.k; ++k) {
        try {
            const auto hold_rows = plan.rows_in(k);
            const auto bus_rows = plan.rows_not_in({k});
            const DatasetBundle bus = data.select_rows(bus_rows);
            const DatasetBundle hold = data.select_rows(hold_rows);
            auto [x_bus, x_hold] = correct(cfg, bus, hold);
            const auto& y_bus = bus.labels().values;
            const auto& y_hold = hold.labels().values;

            std::vector<std::size_t> cols;
            if (cfg.use_ffsel()) {
                relieff::ReliefFConfig rc;
                rc.neighbors = cfg.relieff_neighbors;
                cols = relieff::select_positive(relieff::relieff_rank(x_bus, y_bus, rc));
            }
            if (cols.empty()) {
                if (cfg.use_ffsel()) ++out.ffsel_fallbacks;
                cols.resize(static_cast<std::size_t>(p));
                for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
            } else {
                x_bus = take_cols(x_bus, cols);
                x_hold = take_cols(x_hold, cols);
            }

            const InnerFolds folds = inner_folds(plan, k, bus_rows);
            Eigen::VectorXd s_bus, s_hold;
            switch (cfg.classifier.kind) {
                case ClassifierKind::GNB: {
                    // No hyperparameters, so the inner loop has nothing to select.
                    const auto m = classify::gnb_fit(x_bus, y_bus);
                    s_bus = classify::gnb_predict(m, x_bus);
                    s_hold = classify::gnb_predict(m, x_hold);
                    break;
                }
                case ClassifierKind::KSVM: {
                    const auto m = select_ksvm(cfg.classifier, x_bus, y_bus, folds);
                    s_bus = classify::ksvm_predict(m, x_bus);
                    s_hold = classify::ksvm_predict(m, x_hold);
                    break;
                }
                case ClassifierKind::GLMNET: {
                    const auto m = select_glmnet(cfg.classifier, x_bus, y_bus, folds);
                    s_bus = ((x_bus * m.beta).array() + m.intercept).unaryExpr([](double t) { return classify::logistic(t); });
                    s_hold = ((x_hold * m.beta).array() + m.intercept).unaryExpr([](double t) { return classify::logistic(t); });
                    for (std::size_t j = 0; j < cols.size(); ++j)
                        out.coefficients(static_cast<Eigen::Index>(cols[j]), static_cast<Eigen::Index>(k)) =
                            m.beta(static_cast<Eigen::Index>(j));
                    break;
                }
            }
            accumulate(out.crossval, score_block(y_bus, s_bus));
            accumulate(out.holdout, score_block(y_hold, s_hold));
        } catch (...) {
            rethrow_with_context("outer fold " + std::to_string(k + 1) + ": ");
        }
    }
    divide(out.crossval, static_cast<double>(cfg.k));
    divide(out.holdout, static_cast<double>(cfg.k));
    return out;
}

RunResultSet monte_carlo_run(const RunConfig& cfg, const DatasetBundle& data, std::size_t jobs) {
    cfg.validate();
    RunResultSet set;
    set.config = cfg;
    for (const auto& c : data.features().columns()) set.feature_names.push_back(c.qualified());
    set.replicas.resize(cfg.replicas);
    parallel_for(cfg.replicas, jobs, [&](std::size_t i) {
        const std::size_t r = i + 1;
        try {
            set.replicas[i] = nested_cv_run(cfg, data, stable_hash(cfg.master_seed, r));
            set.replicas[i].replica = r;
        } catch (...) {
            rethrow_with_context("config '" + cfg.config_id + "' replica " + std::to_string(r) + ": ");
        }
    });
    return set;
}

Eigen::VectorXd fold_z(const ReplicaResult& r) {
    const Eigen::MatrixXd& c = r.coefficients;
    if (c.cols() < 2) throw ValidationError("fold_z: need coefficient traces from at least 2 folds");
    const Eigen::VectorXd mean = c.rowwise().mean();
    Eigen::VectorXd z(c.rows());
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
        const double var = (c.row(j).array() - mean(j)).square().sum() / static_cast<double>(c.cols() - 1);
        z(j) = mean(j) / std::max(std::sqrt(var), 1e-12);
    }
    return z;
}

std::string results_to_csv(std::span<const RunResultSet> sets) {
    std::string out = text::csv_join(kResultColumns) + "\n";
    for (const auto& set : sets) {
        const auto& c = set.config;
        for (const auto& r : set.replicas) {
            for (int split = 0; split < 2; ++split) {
                const StatBlock& s = split == 0 ? r.crossval : r.holdout;
                out += text::csv_join({c.config_id, std::string(classify::to_string(c.classifier.kind)), c.sensor,
                                       std::string(harmonize::to_string(c.correction)), c.localization,
                                       std::to_string(r.replica), split == 0 ? "crossval" : "holdout",
                                       text::format_double(s.acc), text::format_double(s.sens),
                                       text::format_double(s.spec), text::format_double(s.auc)});
                out += "\n";
            }
        }
    }
    return out;
}

StatBlock mean_stats(const RunResultSet& set, bool holdout) {
    StatBlock m;
    if (set.replicas.empty()) return m;
    for (const auto& r : set.replicas) accumulate(m, holdout ? r.holdout : r.crossval);
    divide(m, static_cast<double>(set.replicas.size()));
    return m;
}

}  // namespace biomark::cv
