#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace biomark::classify {

enum class ClassifierKind { GNB, KSVM, GLMNET };

std::string_view to_string(ClassifierKind k);
ClassifierKind parse_classifier(std::string_view s);

enum class SelectionMetric { AUC, Accuracy };

SelectionMetric parse_selection_metric(std::string_view s);

/// Powers of two from 2^lo to 2^hi in steps of 2^step.
std::vector<double> pow2_grid(int lo, int hi, int step = 2);

struct KsvmOptions {
    std::vector<double> gammas = pow2_grid(-9, 3);
    std::vector<double> costs = pow2_grid(-5, 7);
    double tolerance = 1e-3;
    std::size_t max_iterations = 1'000'000;
};

struct GlmnetOptions {
    double alpha = 1.0;
    std::size_t n_lambda = 100;
    double lambda_min_ratio = 1e-4;
    /// Outer IRLS convergence: max coefficient change per pass.
    double tolerance = 1e-7;
    std::size_t max_sweeps = 100'000;
    /// Ends the path once the deviance ratio reaches 0.999 (separable data).
    bool stop_on_saturation = true;
};

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::GLMNET;
    KsvmOptions ksvm;
    GlmnetOptions glmnet;
    SelectionMetric metric = SelectionMetric::AUC;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

struct GnbModel {
    Eigen::MatrixXd mean;      // 2 x p, row = class
    Eigen::MatrixXd var;       // 2 x p, floored
    double log_prior[2] = {0.0, 0.0};
};

GnbModel gnb_fit(const Eigen::MatrixXd& x, std::span<const int> y);
/// Posterior P(class 1 | x).
Eigen::VectorXd gnb_predict(const GnbModel& m, const Eigen::MatrixXd& x);

// ---------------------------------------------------------------------------
// RBF-kernel SVM

Eigen::MatrixXd rbf_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma);

/// Soft-margin dual solution over a precomputed kernel.
struct SmoResult {
    Eigen::VectorXd alpha;     // in [0, C]
    double rho = 0.0;          // decision = sum alpha_i y_i K(x_i, x) - rho
    std::size_t iterations = 0;
};

/// SMO with second-order working-set selection; stops at KKT gap < tolerance.
SmoResult smo_solve(const Eigen::MatrixXd& kernel, std::span<const int> y, double cost, double tolerance,
                    std::size_t max_iterations);

struct KsvmModel {
    Eigen::MatrixXd support;          // support vectors (rows)
    std::vector<std::size_t> support_indices;
    Eigen::VectorXd dual_coef;        // alpha_i * y_i, y in {-1, +1}
    double bias = 0.0;
    double gamma = 1.0;
    double cost = 1.0;
};

KsvmModel ksvm_fit_fixed(const Eigen::MatrixXd& x, std::span<const int> y, double gamma, double cost,
                         const KsvmOptions& options = {});
/// Chooses (gamma, C) by seeded stratified 5-fold grid search, then refits.
KsvmModel ksvm_fit(const Eigen::MatrixXd& x, std::span<const int> y, const ClassifierSpec& spec);
Eigen::VectorXd ksvm_decision(const KsvmModel& m, const Eigen::MatrixXd& x);
/// logistic(decision value); no Platt calibration.
Eigen::VectorXd ksvm_predict(const KsvmModel& m, const Eigen::MatrixXd& x);

// ---------------------------------------------------------------------------
// Penalized logistic regression path

/// lambda_max = max_j |sum_i w_i x_ij (y_i - ybar)| / (N alpha) for standardized x,
/// where N = sum of weights. Returns 0 and sets `degenerate` when y is constant.
double glmnet_lambda_max(const Eigen::MatrixXd& x_std, std::span<const int> y, std::span<const double> weights,
                         double alpha, bool* degenerate = nullptr);

/// Log-spaced from lambda_max down to ratio * lambda_max.
std::vector<double> lambda_grid(double lambda_max, std::size_t n, double min_ratio);

struct GlmnetPath {
    double alpha = 1.0;
    double lambda_max = 0.0;
    std::vector<double> lambdas;      // fitted points, strictly decreasing
    Eigen::VectorXd intercepts;       // original feature scale
    Eigen::MatrixXd betas;            // p x L, original feature scale
    Eigen::VectorXd intercepts_std;   // standardized scale
    Eigen::MatrixXd betas_std;        // p x L, standardized scale
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
    std::vector<double> deviance_ratio;
    bool saturated = false;           // path ended early

    std::size_t size() const { return lambdas.size(); }
};

/// Cyclic coordinate descent with IRLS quadratic approximation and warm
/// starts. `lambdas` must be strictly decreasing; empty means the default grid.
/// Features are standardized internally; coefficients are reported on both scales.
GlmnetPath glmnet_fit_path(const Eigen::MatrixXd& x, std::span<const int> y, const GlmnetOptions& options,
                           std::vector<double> lambdas = {});

/// Scores for every path point: column t = logistic(b0_t + x b_t).
Eigen::MatrixXd glmnet_path_scores(const GlmnetPath& path, const Eigen::MatrixXd& x);

/// Index maximizing the validation metric; ties go to the larger lambda.
std::size_t glmnet_pick_lambda(const GlmnetPath& path, const Eigen::MatrixXd& x_val, std::span<const int> y_val,
                               SelectionMetric metric = SelectionMetric::AUC);

/// Index of the best entry of a per-lambda metric vector, ties toward the front.
std::size_t argmax_first(std::span<const double> values);

struct GlmnetModel {
    GlmnetPath path;
    std::size_t chosen = 0;
    double intercept = 0.0;
    Eigen::VectorXd beta;
};

GlmnetModel glmnet_select(GlmnetPath path, std::size_t chosen);

// ---------------------------------------------------------------------------
// Common interface

struct TrainedModel {
    ClassifierKind kind = ClassifierKind::GLMNET;
    std::vector<std::string> feature_names;
    std::variant<GnbModel, KsvmModel, GlmnetModel> model;

    std::string to_json() const;
};

/// Checks feature names and order against the training columns.
Eigen::VectorXd predict_scores(const TrainedModel& model, const Eigen::MatrixXd& x,
                               std::span<const std::string> feature_names);
Eigen::VectorXd predict_scores(const TrainedModel& model, const Eigen::MatrixXd& x);

inline double logistic(double t) {
    return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

}  // namespace biomark::classify
