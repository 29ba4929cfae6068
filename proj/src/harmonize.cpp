#include "biomark/harmonize.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "biomark/error.hpp"
#include "biomark/text.hpp"

namespace biomark::harmonize {

using json = nlohmann::json;

std::string_view to_string(CorrectionType t) {
    switch (t) {
        case CorrectionType::None: return "none";
        case CorrectionType::Residuals: return "residuals";
        case CorrectionType::ZScore: return "zscore";
    }
    return "none";
}

CorrectionType parse_correction(std::string_view s) {
    if (s == "none") return CorrectionType::None;
    if (s == "residuals" || s == "corrected") return CorrectionType::Residuals;
    if (s == "zscore" || s == "z-score") return CorrectionType::ZScore;
    throw ValidationError("unknown correction type '" + std::string(s) + "' (expected none, residuals or zscore)");
}

namespace {

/// Exponent vectors over `k` continuous covariates with total degree 1..d,
/// graded, then lexicographic (descending on the first covariate).
std::vector<std::vector<int>> monomials(std::size_t k, int d) {
    std::vector<std::vector<int>> out;
    std::vector<int> e(k, 0);
    for (int total = 1; total <= d; ++total) {
        std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
            if (pos + 1 == k) {
                e[pos] = left;
                out.push_back(e);
                return;
            }
            for (int v = left; v >= 0; --v) {
                e[pos] = v;
                rec(pos + 1, left - v);
            }
        };
        if (k > 0) rec(0, total);
    }
    return out;
}

struct TermPlan {
    std::vector<std::size_t> continuous;                  // indices into covariates
    std::vector<std::vector<int>> powers;                 // per monomial
    std::vector<std::pair<std::size_t, std::size_t>> indicators;  // (covariate, level)
};

TermPlan plan_terms(const HarmonizationModel& m) {
    TermPlan p;
    for (std::size_t c = 0; c < m.covariates.size(); ++c) {
        if (m.covariates[c].kind == CovariateKind::Continuous)
            p.continuous.push_back(c);
        else
            for (std::size_t l = 1; l < m.covariates[c].levels.size(); ++l) p.indicators.emplace_back(c, l);
    }
    p.powers = monomials(p.continuous.size(), m.degree);
    return p;
}

std::vector<std::string> term_names(const HarmonizationModel& m) {
    const auto p = plan_terms(m);
    std::vector<std::string> names{"1"};
    for (const auto& e : p.powers) {
        std::string s;
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e[i] == 0) continue;
            if (!s.empty()) s += "*";
            s += m.covariates[p.continuous[i]].name;
            if (e[i] > 1) s += "^" + std::to_string(e[i]);
        }
        names.push_back(s);
    }
    for (auto [c, l] : p.indicators) names.push_back(m.covariates[c].name + "[" + m.covariates[c].levels[l] + "]");
    if (m.categorical_interactions)
        for (auto [c, l] : p.indicators)
            for (std::size_t k : p.continuous)
                names.push_back(m.covariates[c].name + "[" + m.covariates[c].levels[l] + "]*" + m.covariates[k].name);
    return names;
}

const CovariateColumn& require_column(const CovariateTable& t, const std::string& name) {
    const auto* col = t.find(name);
    if (!col) throw ValidationError("covariate '" + name + "' is not present in the covariate table");
    return *col;
}

}  // namespace

Eigen::MatrixXd design_matrix(const CovariateTable& table, const HarmonizationModel& model) {
    const auto plan = plan_terms(model);
    const auto n = static_cast<Eigen::Index>(table.rows());
    const std::size_t nc = plan.continuous.size();

    // Standardized continuous values and level indices per row.
    Eigen::MatrixXd cont(n, static_cast<Eigen::Index>(nc));
    std::vector<std::vector<std::size_t>> level_idx(model.covariates.size());
    for (std::size_t c = 0; c < model.covariates.size(); ++c) {
        const auto& enc = model.covariates[c];
        const auto& col = require_column(table, enc.name);
        if (col.kind != enc.kind) throw ValidationError("covariate '" + enc.name + "' changed kind since fit");
        if (enc.kind == CovariateKind::Continuous) {
            const auto pos = static_cast<Eigen::Index>(std::find(plan.continuous.begin(), plan.continuous.end(), c) -
                                                       plan.continuous.begin());
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto& v = col.numeric[static_cast<std::size_t>(i)];
                if (!v)
                    throw ValidationError("covariate '" + enc.name + "' is missing for participant '" +
                                          table.ids()[static_cast<std::size_t>(i)] + "'");
                cont(i, pos) = (*v - enc.center) / enc.scale;
            }
        } else {
            auto& li = level_idx[c];
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto& v = col.level[static_cast<std::size_t>(i)];
                if (!v)
                    throw ValidationError("covariate '" + enc.name + "' is missing for participant '" +
                                          table.ids()[static_cast<std::size_t>(i)] + "'");
                auto it = std::find(enc.levels.begin(), enc.levels.end(), *v);
                if (it == enc.levels.end())
                    throw ValidationError("covariate '" + enc.name + "' has level '" + *v +
                                          "' that was not seen at fit time");
                li.push_back(static_cast<std::size_t>(it - enc.levels.begin()));
            }
        }
    }

    std::size_t n_terms = 1 + plan.powers.size() + plan.indicators.size();
    if (model.categorical_interactions) n_terms += plan.indicators.size() * nc;
    Eigen::MatrixXd d(n, static_cast<Eigen::Index>(n_terms));
    Eigen::Index t = 0;
    d.col(t++).setOnes();
    for (const auto& e : plan.powers) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = 1.0;
            for (std::size_t k = 0; k < nc; ++k)
                for (int p = 0; p < e[k]; ++p) v *= cont(i, static_cast<Eigen::Index>(k));
            d(i, t) = v;
        }
        ++t;
    }
    for (auto [c, l] : plan.indicators) {
        for (Eigen::Index i = 0; i < n; ++i) d(i, t) = level_idx[c][static_cast<std::size_t>(i)] == l ? 1.0 : 0.0;
        ++t;
    }
    if (model.categorical_interactions) {
        for (auto [c, l] : plan.indicators)
            for (std::size_t k = 0; k < nc; ++k) {
                for (Eigen::Index i = 0; i < n; ++i)
                    d(i, t) = level_idx[c][static_cast<std::size_t>(i)] == l ? cont(i, static_cast<Eigen::Index>(k)) : 0.0;
                ++t;
            }
    }
    return d;
}

HarmonizationModel fit_harmonization(const DatasetBundle& train, const HarmonizationOptions& options) {
    if (options.type == CorrectionType::None) throw ValidationError("fit_harmonization: correction type is 'none'");
    if (options.degree < 1) throw ValidationError("fit_harmonization: degree must be >= 1");
    if (options.covariates.empty()) throw ValidationError("fit_harmonization: no covariates requested");

    HarmonizationModel m;
    m.type = options.type;
    m.degree = options.degree;
    m.categorical_interactions = options.categorical_interactions;
    m.features = train.features().columns();

    const auto& cov = train.covariates();
    std::set<std::string> seen;
    for (const auto& name : options.covariates) {
        if (!seen.insert(name).second) throw ValidationError("fit_harmonization: covariate '" + name + "' listed twice");
        const auto& col = require_column(cov, name);
        CovariateEncoding enc{name, col.kind, 0.0, 1.0, {}};
        if (col.kind == CovariateKind::Continuous) {
            double mean = 0.0, m2 = 0.0;
            std::size_t k = 0;
            for (std::size_t i = 0; i < col.numeric.size(); ++i) {
                if (!col.numeric[i])
                    throw ValidationError("covariate '" + name + "' is missing for participant '" + cov.ids()[i] + "'");
                const double x = *col.numeric[i];
                ++k;
                const double delta = x - mean;
                mean += delta / static_cast<double>(k);
                m2 += delta * (x - mean);
            }
            const double sd = k > 1 ? std::sqrt(m2 / static_cast<double>(k - 1)) : 0.0;
            if (!(sd > 0.0)) throw ValidationError("covariate '" + name + "' is constant on the training rows");
            enc.center = mean;
            enc.scale = sd;
        } else {
            std::set<std::string> levels;
            for (std::size_t i = 0; i < col.level.size(); ++i) {
                if (!col.level[i])
                    throw ValidationError("covariate '" + name + "' is missing for participant '" + cov.ids()[i] + "'");
                levels.insert(*col.level[i]);
            }
            if (levels.size() < 2) throw ValidationError("covariate '" + name + "' is constant on the training rows");
            enc.levels.assign(levels.begin(), levels.end());
        }
        m.covariates.push_back(std::move(enc));
    }
    m.terms = term_names(m);

    const Eigen::MatrixXd d = design_matrix(cov, m);
    if (d.rows() < d.cols())
        throw NumericalError("fit_harmonization: " + std::to_string(d.rows()) + " training rows for " +
                             std::to_string(d.cols()) + " design columns");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d);
    if (qr.rank() < d.cols())
        throw NumericalError("fit_harmonization: rank-deficient covariate design (rank " + std::to_string(qr.rank()) +
                             " of " + std::to_string(d.cols()) + ")");

    const Eigen::MatrixXd& y = train.features().values();
    m.mean_coef = qr.solve(y);
    if (m.type == CorrectionType::ZScore) {
        const Eigen::MatrixXd r = y - d * m.mean_coef;
        const Eigen::MatrixXd sq = r.array().square().matrix();
        m.var_coef = qr.solve(sq);
        m.var_floor.resize(sq.cols());
        for (Eigen::Index j = 0; j < sq.cols(); ++j) m.var_floor(j) = std::max(1e-12, 0.05 * sq.col(j).mean());
    }
    return m;
}

FeatureMatrix apply_harmonization(const DatasetBundle& data, const HarmonizationModel& model) {
    const auto& fm = data.features();
    std::vector<std::size_t> idx;
    for (const auto& c : model.features) {
        auto j = fm.find_column(c.qualified());
        if (!j) throw ValidationError("apply_harmonization: feature '" + c.qualified() + "' missing from data");
        idx.push_back(*j);
    }
    const FeatureMatrix sel = fm.select_columns(idx);
    const Eigen::MatrixXd d = design_matrix(data.covariates(), model);
    Eigen::MatrixXd out = sel.values() - d * model.mean_coef;
    if (model.type == CorrectionType::ZScore) {
        const Eigen::MatrixXd var = d * model.var_coef;
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            for (Eigen::Index i = 0; i < out.rows(); ++i)
                out(i, j) /= std::sqrt(std::max(var(i, j), model.var_floor(j)));
    }
    return sel.with_values(std::move(out));
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (j.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j.at(0).size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
    return m;
}

}  // namespace

std::string HarmonizationModel::to_json() const {
    json covs = json::array();
    for (const auto& c : covariates)
        covs.push_back({{"name", c.name},
                        {"kind", c.kind == CovariateKind::Continuous ? "continuous" : "categorical"},
                        {"center", c.center},
                        {"scale", c.scale},
                        {"levels", c.levels}});
    json feats = json::array();
    for (const auto& f : features) feats.push_back(f.qualified());
    json j = {{"type", std::string(to_string(type))},
              {"degree", degree},
              {"categorical_interactions", categorical_interactions},
              {"covariates", covs},
              {"terms", terms},
              {"features", feats},
              {"mean_coefficients", matrix_to_json(mean_coef)}};
    if (type == CorrectionType::ZScore) {
        j["variance_coefficients"] = matrix_to_json(var_coef);
        j["variance_floor"] = std::vector<double>(var_floor.data(), var_floor.data() + var_floor.size());
    }
    return j.dump(2);
}

HarmonizationModel HarmonizationModel::from_json(std::string_view s) {
    HarmonizationModel m;
    try {
        const json j = json::parse(s);
        m.type = parse_correction(j.at("type").get<std::string>());
        m.degree = j.at("degree").get<int>();
        m.categorical_interactions = j.at("categorical_interactions").get<bool>();
        for (const auto& c : j.at("covariates")) {
            CovariateEncoding e;
            e.name = c.at("name").get<std::string>();
            e.kind = c.at("kind").get<std::string>() == "continuous" ? CovariateKind::Continuous : CovariateKind::Categorical;
            e.center = c.at("center").get<double>();
            e.scale = c.at("scale").get<double>();
            e.levels = c.at("levels").get<std::vector<std::string>>();
            m.covariates.push_back(std::move(e));
        }
        m.terms = j.at("terms").get<std::vector<std::string>>();
        for (const auto& q : j.at("features")) {
            const auto s = q.get<std::string>();
            const auto slash = s.find('/');
            if (slash == std::string::npos) throw ValidationError("harmonization model: bad feature name '" + s + "'");
            m.features.push_back({s.substr(slash + 1), parse_modality(s.substr(0, slash)), std::nullopt, std::nullopt});
        }
        m.mean_coef = matrix_from_json(j.at("mean_coefficients"));
        if (m.type == CorrectionType::ZScore) {
            m.var_coef = matrix_from_json(j.at("variance_coefficients"));
            const auto fl = j.at("variance_floor").get<std::vector<double>>();
            m.var_floor = Eigen::Map<const Eigen::VectorXd>(fl.data(), static_cast<Eigen::Index>(fl.size()));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("harmonization model JSON: ") + e.what());
    }
    return m;
}

std::uint64_t HarmonizationModel::digest() const { return text::fnv1a(to_json()); }

// ---------------------------------------------------------------------------
// Plain z-score

ZScoreParams fit_plain_zscore(const FeatureMatrix& train) {
    if (train.rows() < 2) throw ValidationError("fit_plain_zscore: need at least 2 rows");
    ZScoreParams p;
    p.features = train.columns();
    const auto& v = train.values();
    p.mean.resize(v.cols());
    p.sd.resize(v.cols());
    p.degenerate.assign(static_cast<std::size_t>(v.cols()), 0);
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        // Welford, so a constant column has an exact mean.
        double mean = 0.0, m2 = 0.0;
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            const double delta = v(i, j) - mean;
            mean += delta / static_cast<double>(i + 1);
            m2 += delta * (v(i, j) - mean);
        }
        const double sd = std::sqrt(m2 / static_cast<double>(v.rows() - 1));
        p.mean(j) = mean;
        p.sd(j) = std::max(sd, kStdFloor);
        p.degenerate[static_cast<std::size_t>(j)] = sd <= kStdFloor;
    }
    return p;
}

FeatureMatrix apply_plain_zscore(const FeatureMatrix& data, const ZScoreParams& params) {
    std::vector<std::size_t> idx;
    for (const auto& c : params.features) {
        auto j = data.find_column(c.qualified());
        if (!j) throw ValidationError("apply_plain_zscore: feature '" + c.qualified() + "' missing from data");
        idx.push_back(*j);
    }
    const FeatureMatrix sel = data.select_columns(idx);
    Eigen::MatrixXd out = sel.values();
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
        if (params.degenerate[static_cast<std::size_t>(j)]) {
            out.col(j).setZero();
            continue;
        }
        out.col(j) = (out.col(j).array() - params.mean(j)) / params.sd(j);
    }
    return sel.with_values(std::move(out));
}

std::uint64_t ZScoreParams::digest() const {
    std::uint64_t h = text::fnv1a("zscore");
    for (Eigen::Index j = 0; j < mean.size(); ++j) {
        h = text::fnv1a(features[static_cast<std::size_t>(j)].qualified(), h);
        h = text::fnv1a(text::format_double(mean(j)), h);
        h = text::fnv1a(text::format_double(sd(j)), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Per-modality harmonization

std::vector<ModalityRoster> default_rosters() {
    return {{Modality::MAG, {"age", "site", "movement"}, 2, false},
            {Modality::GRAD, {"age", "site", "movement"}, 2, false},
            {Modality::MRI, {"age", "sex", "tiv"}, 2, false},
            {Modality::OTHER, {"age"}, 2, false}};
}

GroupedModel fit_grouped(const DatasetBundle& train, CorrectionType type, const std::vector<ModalityRoster>& rosters) {
    GroupedModel g;
    g.n_columns = train.features().cols();
    const auto& cols = train.features().columns();
    std::map<Modality, std::vector<std::size_t>> groups;
    for (std::size_t j = 0; j < cols.size(); ++j) groups[cols[j].modality].push_back(j);
    for (const auto& [modality, idx] : groups) {
        auto it = std::find_if(rosters.begin(), rosters.end(), [&](const auto& r) { return r.modality == modality; });
        if (it == rosters.end())
            throw ValidationError("no harmonization covariate roster configured for modality " +
                                  std::string(to_string(modality)));
        HarmonizationOptions opt{type, it->covariates, it->degree, it->categorical_interactions};
        g.models.push_back(fit_harmonization(train.with_features(train.features().select_columns(idx)), opt));
        g.column_groups.push_back(idx);
    }
    return g;
}

FeatureMatrix apply_grouped(const DatasetBundle& data, const GroupedModel& model) {
    if (data.features().cols() != model.n_columns)
        throw ValidationError("apply_grouped: column count differs from the fitted data");
    Eigen::MatrixXd out(data.features().values().rows(), data.features().values().cols());
    for (std::size_t g = 0; g < model.models.size(); ++g) {
        const auto corrected = apply_harmonization(data, model.models[g]);
        const auto& idx = model.column_groups[g];
        for (std::size_t k = 0; k < idx.size(); ++k)
            out.col(static_cast<Eigen::Index>(idx[k])) = corrected.values().col(static_cast<Eigen::Index>(k));
    }
    return data.features().with_values(std::move(out));
}

std::uint64_t GroupedModel::digest() const {
    std::uint64_t h = text::fnv1a("grouped");
    for (const auto& m : models) h = text::fnv1a(text::hex64(m.digest()), h);
    return h;
}

}  // namespace biomark::harmonize
