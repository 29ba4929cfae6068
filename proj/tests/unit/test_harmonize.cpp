#include <doctest.h>

#include <cmath>
#include <numeric>

#include "biomark/error.hpp"
#include "biomark/harmonize.hpp"
#include "biomark/rng.hpp"
#include "biomark/synth.hpp"

using namespace biomark;
using namespace biomark::harmonize;

namespace {

struct Rows {
    std::vector<double> age, tiv;
    std::vector<std::string> site, sex;
};

DatasetBundle bundle_of(const Rows& r, const Eigen::MatrixXd& values, Modality m = Modality::MRI) {
    const std::size_t n = r.age.size();
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(1000 + i));
    std::vector<ColumnInfo> cols;
    for (Eigen::Index j = 0; j < values.cols(); ++j) cols.push_back({"f" + std::to_string(j), m, std::nullopt, std::nullopt});
    CovariateColumn age{"age", CovariateKind::Continuous, {}, {}}, tiv{"tiv", CovariateKind::Continuous, {}, {}};
    CovariateColumn site{"site", CovariateKind::Categorical, {}, {}}, sex{"sex", CovariateKind::Categorical, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        age.numeric.push_back(r.age[i]);
        tiv.numeric.push_back(r.tiv.empty() ? 1500.0 + static_cast<double>(i % 7) : r.tiv[i]);
        site.level.push_back(r.site.empty() ? std::string(i % 2 ? "2" : "1") : r.site[i]);
        sex.level.push_back(r.sex.empty() ? std::string(i % 3 ? "F" : "M") : r.sex[i]);
    }
    LabelVector l{ids, {}};
    for (std::size_t i = 0; i < n; ++i) l.values.push_back(static_cast<int>(i % 2));
    return DatasetBundle(FeatureMatrix(ids, cols, values), CovariateTable(ids, {age, sex, site, tiv}), l);
}

Rows random_rows(std::size_t n, Rng& rng) {
    Rows r;
    for (std::size_t i = 0; i < n; ++i) {
        r.age.push_back(rng.normal(70, 8));
        r.tiv.push_back(rng.normal(1500, 120));
    }
    return r;
}

}  // namespace

TEST_CASE("exact linear dependence leaves zero residuals") {
    Rng rng(1);
    const Rows r = random_rows(20, rng);
    Eigen::MatrixXd v(20, 1);
    for (int i = 0; i < 20; ++i) v(i, 0) = 2.0 * r.age[static_cast<std::size_t>(i)];
    const auto b = bundle_of(r, v);
    const auto m = fit_harmonization(b, {CorrectionType::Residuals, {"age"}, 1, false});
    CHECK(apply_harmonization(b, m).values().cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("independent feature: slopes near zero, residuals match the normal equations") {
    Rng rng(2);
    const Rows r = random_rows(10, rng);
    Eigen::MatrixXd v(10, 1);
    for (int i = 0; i < 10; ++i) v(i, 0) = rng.normal();
    const auto b = bundle_of(r, v);
    const auto m = fit_harmonization(b, {CorrectionType::Residuals, {"age"}, 1, false});
    // normal-equation oracle on [1, age]
    Eigen::MatrixXd d(10, 2);
    for (int i = 0; i < 10; ++i) d.row(i) << 1.0, r.age[static_cast<std::size_t>(i)];
    const Eigen::VectorXd coef = (d.transpose() * d).ldlt().solve(d.transpose() * v.col(0));
    const Eigen::VectorXd resid = v.col(0) - d * coef;
    CHECK((apply_harmonization(b, m).values().col(0) - resid).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("training residuals are orthogonal to the design") {
    Rng rng(3);
    for (int degree : {1, 2, 3}) {
        const Rows r = random_rows(60, rng);
        Eigen::MatrixXd v(60, 4);
        for (int i = 0; i < 60; ++i)
            for (int j = 0; j < 4; ++j) v(i, j) = rng.normal() + 0.05 * j * r.age[static_cast<std::size_t>(i)];
        const auto b = bundle_of(r, v);
        const auto m = fit_harmonization(b, {CorrectionType::Residuals, {"age", "sex", "tiv"}, degree, degree == 2});
        const Eigen::MatrixXd d = design_matrix(b.covariates(), m);
        const Eigen::MatrixXd res = apply_harmonization(b, m).values();
        for (Eigen::Index t = 0; t < d.cols(); ++t)
            for (Eigen::Index j = 0; j < res.cols(); ++j)
                CHECK(std::abs(d.col(t).dot(res.col(j))) <= 1e-8 * d.col(t).norm() * std::max(res.col(j).norm(), 1e-300));
    }
}

TEST_CASE("z-score correction has zero training mean") {
    Rng rng(4);
    const Rows r = random_rows(80, rng);
    Eigen::MatrixXd v(80, 3);
    for (int i = 0; i < 80; ++i)
        for (int j = 0; j < 3; ++j) v(i, j) = rng.normal() * (1.0 + 0.02 * (r.age[static_cast<std::size_t>(i)] - 70.0));
    const auto b = bundle_of(r, v);
    const auto m = fit_harmonization(b, {CorrectionType::ZScore, {"age", "site"}, 2, false});
    const auto z = apply_harmonization(b, m).values();
    for (Eigen::Index j = 0; j < z.cols(); ++j) CHECK(std::abs(z.col(j).mean()) < 0.1);
    CHECK(z.allFinite());
}

TEST_CASE("unseen categorical level at apply time") {
    Rng rng(5);
    Rows train = random_rows(12, rng);
    Rows test = random_rows(4, rng);
    test.site = {"1", "3", "2", "1"};
    const auto m = fit_harmonization(bundle_of(train, Eigen::MatrixXd::Random(12, 2)),
                                     {CorrectionType::Residuals, {"age", "site"}, 1, false});
    try {
        apply_harmonization(bundle_of(test, Eigen::MatrixXd::Random(4, 2)), m);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("site") != std::string::npos);
        CHECK(msg.find("'3'") != std::string::npos);
    }
}

TEST_CASE("fit errors") {
    Rng rng(6);
    Rows r = random_rows(6, rng);
    const auto b = bundle_of(r, Eigen::MatrixXd::Random(6, 1));
    CHECK_THROWS_AS(fit_harmonization(b, {CorrectionType::Residuals, {"age", "tiv"}, 3, false}), NumericalError);
    CHECK_THROWS_AS(fit_harmonization(b, {CorrectionType::Residuals, {"weight"}, 1, false}), ValidationError);
    r.age.assign(6, 70.0);
    CHECK_THROWS_AS(fit_harmonization(bundle_of(r, Eigen::MatrixXd::Random(6, 1)), {CorrectionType::Residuals, {"age"}, 1, false}),
                    ValidationError);
}

TEST_CASE("holdout reuses train-fit parameters") {
    Rng rng(7);
    const Rows tr = random_rows(40, rng), ho = random_rows(15, rng);
    Eigen::MatrixXd vt(40, 2), vh(15, 2);
    for (int i = 0; i < 40; ++i) vt.row(i) << rng.normal() + 0.1 * tr.age[static_cast<std::size_t>(i)], rng.normal();
    for (int i = 0; i < 15; ++i) vh.row(i) << rng.normal() + 0.1 * ho.age[static_cast<std::size_t>(i)] + 1.0, rng.normal();
    const auto train = bundle_of(tr, vt), hold = bundle_of(ho, vh);
    for (auto type : {CorrectionType::Residuals, CorrectionType::ZScore}) {
        const auto m = fit_harmonization(train, {type, {"age", "site"}, 2, false});
        const auto before = m.digest();
        const auto out = apply_harmonization(hold, m).values();
        CHECK(m.digest() == before);
        // the serialized parameters reproduce the holdout transform exactly
        const auto reloaded = HarmonizationModel::from_json(m.to_json());
        CHECK(reloaded.digest() == before);
        CHECK(apply_harmonization(hold, reloaded).values() == out);
        // a model fitted on the holdout rows differs
        const auto refit = fit_harmonization(hold, {type, {"age", "site"}, 2, false});
        CHECK(refit.digest() != before);
        CHECK((apply_harmonization(hold, refit).values() - out).cwiseAbs().maxCoeff() > 1e-6);
    }
}

TEST_CASE("plain z-score") {
    const std::vector<std::string> ids = {"a", "b"};
    FeatureMatrix fm(ids, {{"x", Modality::MAG, {}, {}}, {"c", Modality::MAG, {}, {}}}, (Eigen::MatrixXd(2, 2) << 1, 5, 3, 5).finished());
    const auto p = fit_plain_zscore(fm);
    CHECK(p.mean(0) == 2.0);
    CHECK(std::abs(p.sd(0) - std::sqrt(2.0)) < 1e-15);
    CHECK(p.degenerate[1]);
    const auto z = apply_plain_zscore(fm, p).values();
    CHECK(z(0, 1) == 0.0);
    CHECK(z(1, 1) == 0.0);

    Rng rng(8);
    Eigen::MatrixXd v(50, 3);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 4.0 + 3.0 * rng.normal();
    std::vector<std::string> ids50;
    for (int i = 0; i < 50; ++i) ids50.push_back("p" + std::to_string(i));
    const FeatureMatrix big(ids50, {{"a", Modality::MRI, {}, {}}, {"b", Modality::MRI, {}, {}}, {"c", Modality::MRI, {}, {}}}, v);
    const auto zz = apply_plain_zscore(big, fit_plain_zscore(big)).values();
    for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(std::abs(zz.col(j).mean()) < 1e-12);
        const double sd = std::sqrt((zz.col(j).array() - zz.col(j).mean()).square().sum() / 49.0);
        CHECK(std::abs(sd - 1.0) < 1e-9);
    }
    // already standard columns pass through
    const auto again = apply_plain_zscore(big.with_values(zz), fit_plain_zscore(big.with_values(zz))).values();
    CHECK((again - zz).cwiseAbs().maxCoeff() < 1e-12);
    // an affine image y = a x + b under x's parameters
    const auto px = fit_plain_zscore(big);
    const Eigen::MatrixXd y = (2.5 * v.array() + 1.0).matrix();
    const auto zy = apply_plain_zscore(big.with_values(y), px).values();
    for (Eigen::Index j = 0; j < 3; ++j)
        for (Eigen::Index i = 0; i < 50; ++i)
            CHECK(std::abs(zy(i, j) - (y(i, j) - px.mean(j)) / px.sd(j)) < 1e-12);
}

TEST_CASE("site shift is removed by residual correction") {
    synth::SynthConfig cfg;
    cfg.rows = 200;
    cfg.positives = 90;
    cfg.noise = 20;
    cfg.site_shift = 3.0;
    cfg.seed = 21;
    const auto data = synth::synth_dataset(cfg).data;
    const auto g = fit_grouped(data, CorrectionType::Residuals, default_rosters());
    const auto corrected = apply_grouped(data, g).values();
    const auto* site = data.covariates().find("site");
    REQUIRE(site != nullptr);
    Eigen::MatrixXd d(200, 2);
    for (Eigen::Index i = 0; i < 200; ++i) d.row(i) << 1.0, *site->level[static_cast<std::size_t>(i)] == "2" ? 1.0 : 0.0;
    const auto qr = d.colPivHouseholderQr();
    double worst_raw = 0.0, worst = 0.0;
    for (Eigen::Index j = 0; j < corrected.cols(); ++j) {
        worst_raw = std::max(worst_raw, std::abs(qr.solve(data.features().values().col(j))(1)));
        worst = std::max(worst, std::abs(qr.solve(corrected.col(j))(1)));
    }
    CHECK(worst_raw > 1.0);
    CHECK(worst < 1e-6);
}
