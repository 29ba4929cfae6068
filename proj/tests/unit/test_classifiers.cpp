#include <doctest.h>

#include <cmath>
#include <numeric>

#include "biomark/classifiers.hpp"
#include "biomark/error.hpp"
#include "biomark/metrics.hpp"
#include "biomark/rng.hpp"
#include "oracles.hpp"

using namespace biomark;
using namespace biomark::classify;

namespace {

Eigen::MatrixXd standardize(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double m = x.col(j).mean();
        const double sd = std::sqrt((x.col(j).array() - m).square().mean());
        out.col(j) = (x.col(j).array() - m) / sd;
    }
    return out;
}

struct Instance {
    Eigen::MatrixXd x;
    std::vector<int> y;
};

Instance logistic_instance(std::size_t n, std::size_t p, std::uint64_t seed, double signal = 0.8) {
    Rng rng(seed);
    Instance d{Eigen::MatrixXd(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p)), {}};
    Eigen::VectorXd beta(static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = signal * rng.normal();
    for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.x.cols(); ++j) d.x(i, j) = rng.normal();
        d.y.push_back(rng.uniform() < logistic(d.x.row(i).dot(beta)) ? 1 : 0);
    }
    // both classes
    d.y[0] = 0;
    d.y[1] = 1;
    return d;
}

}  // namespace

TEST_CASE("pow2 grids") {
    CHECK(pow2_grid(-9, 3).size() == 7);
    CHECK(pow2_grid(-5, 7).front() == doctest::Approx(1.0 / 32));
    CHECK(pow2_grid(-5, 7).back() == 128.0);
    CHECK_THROWS_AS(pow2_grid(3, 1), ValidationError);
}

TEST_CASE("GNB boundary sits at the midpoint of equal-variance classes") {
    Eigen::MatrixXd x(6, 1);
    x << -1, 0, 1, 1, 2, 3;
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    const auto m = gnb_fit(x, y);
    Eigen::MatrixXd q(3, 1);
    q << 1.0, 0.9, 1.1;
    const auto s = gnb_predict(m, q);
    CHECK(s(0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(s(1) < 0.5);
    CHECK(s(2) > 0.5);
}

TEST_CASE("GNB is invariant to duplicating every row") {
    const auto d = logistic_instance(40, 3, 5);
    Eigen::MatrixXd x2(80, 3);
    x2 << d.x, d.x;
    std::vector<int> y2 = d.y;
    y2.insert(y2.end(), d.y.begin(), d.y.end());
    const auto a = gnb_fit(d.x, d.y);
    const auto b = gnb_fit(x2, y2);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.var - b.var).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.log_prior[1] == doctest::Approx(b.log_prior[1]));
}

TEST_CASE("GNB reaches the Bayes rate for N(0,1) vs N(2,1)") {
    Rng rng(17);
    const int n = 10000;
    Eigen::MatrixXd x(2 * n, 1), t(2 * n, 1);
    std::vector<int> y(2 * n);
    for (int i = 0; i < 2 * n; ++i) {
        y[i] = i < n ? 0 : 1;
        x(i, 0) = rng.normal(2.0 * y[i], 1.0);
        t(i, 0) = rng.normal(2.0 * y[i], 1.0);
    }
    const auto s = gnb_predict(gnb_fit(x, y), t);
    const auto st = compute_metrics(y, std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
    // Phi(1)
    CHECK(std::abs(st.acc - 0.841345) < 0.01);
}

TEST_CASE("GNB rejects a single-class or tiny training set") {
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 2);
    CHECK_THROWS_AS(gnb_fit(x, std::vector<int>{1, 1, 1, 1}), ValidationError);
    CHECK_THROWS_AS(gnb_fit(x, std::vector<int>{0, 1, 1, 1}), ValidationError);
}

TEST_CASE("GNB labels are unchanged by plain z-scoring") {
    const auto d = logistic_instance(60, 4, 23);
    const auto a = gnb_predict(gnb_fit(d.x, d.y), d.x);
    const Eigen::MatrixXd z = standardize(d.x);
    const auto b = gnb_predict(gnb_fit(z, d.y), z);
    for (Eigen::Index i = 0; i < a.size(); ++i) CHECK((a(i) >= 0.5) == (b(i) >= 0.5));
}

TEST_CASE("lambda_max small examples") {
    Eigen::MatrixXd x(2, 1);
    x << 1, -1;
    CHECK(glmnet_lambda_max(x, std::vector<int>{1, 0}, {}, 1.0) == doctest::Approx(0.5));
    bool degenerate = false;
    CHECK(glmnet_lambda_max(x, std::vector<int>{1, 1}, {}, 1.0, &degenerate) == 0.0);
    CHECK(degenerate);
    const std::vector<double> w2{2.0, 2.0};
    CHECK(glmnet_lambda_max(x, std::vector<int>{1, 0}, w2, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("GLMNET head of the path is the null model") {
    const auto d = logistic_instance(50, 5, 3);
    const auto path = glmnet_fit_path(d.x, d.y, {});
    REQUIRE(path.size() >= 1);
    CHECK(path.betas.col(0).cwiseAbs().maxCoeff() == 0.0);
    const double ybar = std::accumulate(d.y.begin(), d.y.end(), 0.0) / static_cast<double>(d.y.size());
    CHECK(std::abs(path.intercepts(0) - std::log(ybar / (1 - ybar))) < 1e-8);
    for (std::size_t t = 1; t < path.size(); ++t) CHECK(path.lambdas[t] < path.lambdas[t - 1]);
    // tail active set contains the (empty) head set and is non-empty
    CHECK((path.betas.col(static_cast<Eigen::Index>(path.size() - 1)).array() != 0.0).any());
}

TEST_CASE("GLMNET at tiny lambda matches the logistic MLE") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto d = logistic_instance(30, 3, seed, 0.5);
        GlmnetOptions o;
        o.stop_on_saturation = false;
        const double lmax = glmnet_lambda_max(standardize(d.x), d.y, {}, 1.0);
        const auto path = glmnet_fit_path(d.x, d.y, o, {lmax, lmax * 1e-6});
        const Eigen::VectorXd mle = oracle::logistic_mle(d.x, d.y);
        CHECK(std::abs(path.intercepts(1) - mle(0)) < 1e-3);
        for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(path.betas(j, 1) - mle(j + 1)) < 1e-3);
    }
}

TEST_CASE("GLMNET satisfies the KKT conditions along the path") {
    const auto d = logistic_instance(80, 6, 11);
    GlmnetOptions o;
    o.stop_on_saturation = false;
    const auto path = glmnet_fit_path(d.x, d.y, o);
    const Eigen::MatrixXd xs = standardize(d.x);
    double worst = 0.0;
    for (std::size_t t = 0; t < path.size(); ++t) {
        const auto c = static_cast<Eigen::Index>(t);
        const Eigen::VectorXd eta = (xs * path.betas_std.col(c)).array() + path.intercepts_std(c);
        Eigen::VectorXd resid(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = d.y[static_cast<std::size_t>(i)] - logistic(eta(i));
        const Eigen::VectorXd g = xs.transpose() * resid / static_cast<double>(eta.size());
        for (Eigen::Index j = 0; j < g.size(); ++j) {
            const double b = path.betas_std(j, c);
            const double r = b == 0.0 ? std::max(0.0, std::abs(g(j)) - path.lambdas[t])
                                      : std::abs(g(j) - path.lambdas[t] * (b > 0 ? 1.0 : -1.0));
            worst = std::max(worst, r);
        }
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("GLMNET scores and pick rule") {
    const auto d = logistic_instance(60, 4, 9);
    const auto path = glmnet_fit_path(d.x, d.y, {});
    // constant validation scores everywhere: single-lambda path picks index 0
    GlmnetPath one = path;
    CHECK(argmax_first(std::vector<double>{0.5, 0.5, 0.5}) == 0);
    CHECK(argmax_first(std::vector<double>{0.1, 0.7, 0.7}) == 1);
    const auto idx = glmnet_pick_lambda(path, d.x, d.y);
    CHECK(idx < path.size());
    const auto m = glmnet_select(path, idx);
    TrainedModel tm{ClassifierKind::GLMNET, {"a", "b", "c", "d"}, m};
    const auto s = predict_scores(tm, d.x);
    CHECK(s.minCoeff() >= 0.0);
    CHECK(s.maxCoeff() <= 1.0);
    const std::vector<std::string> wrong{"a", "b", "d", "c"};
    CHECK_THROWS_AS(predict_scores(tm, d.x, wrong), ValidationError);
    CHECK_THROWS_AS(glmnet_pick_lambda(path, Eigen::MatrixXd(0, 4), std::vector<int>{}), ValidationError);
}

TEST_CASE("GLMNET zero model scores one half, and scores rise with a positive coefficient") {
    GlmnetModel m;
    m.beta = Eigen::VectorXd::Zero(2);
    TrainedModel tm{ClassifierKind::GLMNET, {"a", "b"}, m};
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 2);
    CHECK((predict_scores(tm, x).array() == 0.5).all());
    std::get<GlmnetModel>(tm.model).beta(0) = 0.7;
    Eigen::MatrixXd q(2, 2);
    q << 0.1, 0.0, 0.2, 0.0;
    const auto s = predict_scores(tm, q);
    CHECK(s(1) > s(0));
}

TEST_CASE("GLMNET reports the lambda index on non-convergence") {
    const auto d = logistic_instance(40, 4, 2);
    GlmnetOptions o;
    o.max_sweeps = 1;
    o.n_lambda = 5;
    try {
        glmnet_fit_path(d.x, d.y, o);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(std::string(e.what()).find("lambda index 1") != std::string::npos);
    }
}

TEST_CASE("KSVM separates linearly separable blobs") {
    Rng rng(4);
    Eigen::MatrixXd x(40, 2);
    std::vector<int> y(40);
    for (int i = 0; i < 40; ++i) {
        y[i] = i % 2;
        x(i, 0) = rng.normal(y[i] ? 3.0 : -3.0, 0.5);
        x(i, 1) = rng.normal(0.0, 0.5);
    }
    const auto m = ksvm_fit_fixed(x, y, 0.5, 1.0);
    const auto s = ksvm_predict(m, x);
    for (int i = 0; i < 40; ++i) CHECK((s(i) >= 0.5) == (y[i] == 1));
    for (Eigen::Index k = 0; k < m.dual_coef.size(); ++k) CHECK(std::abs(m.dual_coef(k)) <= 1.0 + 1e-12);
}

TEST_CASE("KSVM fits XOR where a linear rule cannot") {
    Rng rng(8);
    Eigen::MatrixXd x(80, 2);
    std::vector<int> y(80);
    for (int i = 0; i < 80; ++i) {
        const int qx = i % 2, qy = (i / 2) % 2;
        x(i, 0) = rng.normal(qx ? 2.0 : -2.0, 0.4);
        x(i, 1) = rng.normal(qy ? 2.0 : -2.0, 0.4);
        y[i] = qx ^ qy;
    }
    ClassifierSpec spec;
    spec.kind = ClassifierKind::KSVM;
    spec.seed = 3;
    const auto m = ksvm_fit(x, y, spec);
    const auto s = ksvm_predict(m, x);
    int correct = 0;
    for (int i = 0; i < 80; ++i) correct += (s(i) >= 0.5) == (y[i] == 1);
    CHECK(correct / 80.0 >= 0.95);

    // best linear rule through the centre of the layout, over an angle sweep
    double best_linear = 0.0;
    for (int a = 0; a < 360; ++a) {
        const double th = a * M_PI / 180.0;
        int ok = 0;
        for (int i = 0; i < 80; ++i) ok += (std::cos(th) * x(i, 0) + std::sin(th) * x(i, 1) >= 0.0) == (y[i] == 1);
        best_linear = std::max(best_linear, ok / 80.0);
    }
    CHECK(best_linear <= 0.6);
}

TEST_CASE("KSVM decision is unchanged by duplicating a non-support point") {
    Rng rng(12);
    Eigen::MatrixXd x(20, 2);
    std::vector<int> y(20);
    for (int i = 0; i < 20; ++i) {
        y[i] = i % 2;
        x(i, 0) = rng.normal(y[i] ? 2.0 : -2.0, 0.6);
        x(i, 1) = rng.normal(0.0, 0.6);
    }
    const auto m = ksvm_fit_fixed(x, y, 0.5, 1.0);
    std::size_t non_support = 20;
    for (std::size_t i = 0; i < 20; ++i)
        if (std::find(m.support_indices.begin(), m.support_indices.end(), i) == m.support_indices.end()) {
            non_support = i;
            break;
        }
    REQUIRE(non_support < 20);
    Eigen::MatrixXd x2(21, 2);
    x2 << x, x.row(static_cast<Eigen::Index>(non_support));
    std::vector<int> y2 = y;
    y2.push_back(y[non_support]);
    const auto m2 = ksvm_fit_fixed(x2, y2, 0.5, 1.0);
    Eigen::MatrixXd grid = Eigen::MatrixXd::Random(30, 2) * 3.0;
    const auto d1 = ksvm_decision(m, grid);
    const auto d2 = ksvm_decision(m2, grid);
    CHECK((d1 - d2).cwiseAbs().maxCoeff() < 1e-2);
}

TEST_CASE("classifier names round-trip") {
    for (auto k : {ClassifierKind::GNB, ClassifierKind::KSVM, ClassifierKind::GLMNET}) CHECK(parse_classifier(to_string(k)) == k);
    CHECK_THROWS_AS(parse_classifier("SVM"), ValidationError);
    CHECK(parse_selection_metric("accuracy") == SelectionMetric::Accuracy);
}

TEST_CASE("trained models serialize to JSON") {
    const auto d = logistic_instance(30, 2, 4);
    TrainedModel g{ClassifierKind::GNB, {"a", "b"}, gnb_fit(d.x, d.y)};
    CHECK(g.to_json().find("\"kind\":\"GNB\"") != std::string::npos);
    TrainedModel k{ClassifierKind::KSVM, {"a", "b"}, ksvm_fit_fixed(d.x, d.y, 1.0, 1.0)};
    CHECK(k.to_json().find("dual_coef") != std::string::npos);
}
