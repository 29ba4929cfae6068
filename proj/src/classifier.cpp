#include <nlohmann/json.hpp>

#include <cmath>

#include "biomark/classifiers.hpp"
#include "biomark/error.hpp"

namespace biomark::classify {

using json = nlohmann::json;

std::string_view to_string(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::GNB: return "GNB";
        case ClassifierKind::KSVM: return "KSVM";
        case ClassifierKind::GLMNET: return "GLMNET";
    }
    return "?";
}

ClassifierKind parse_classifier(std::string_view s) {
    if (s == "GNB" || s == "gnb") return ClassifierKind::GNB;
    if (s == "KSVM" || s == "ksvm") return ClassifierKind::KSVM;
    if (s == "GLMNET" || s == "glmnet") return ClassifierKind::GLMNET;
    throw ValidationError("unknown classifier '" + std::string(s) + "' (expected GNB, KSVM or GLMNET)");
}

SelectionMetric parse_selection_metric(std::string_view s) {
    if (s == "auc" || s == "AUC") return SelectionMetric::AUC;
    if (s == "acc" || s == "accuracy" || s == "Acc") return SelectionMetric::Accuracy;
    throw ValidationError("unknown selection metric '" + std::string(s) + "' (expected auc or accuracy)");
}

std::vector<double> pow2_grid(int lo, int hi, int step) {
    if (step <= 0 || hi < lo) throw ValidationError("pow2_grid: need lo <= hi and step > 0");
    std::vector<double> out;
    for (int e = lo; e <= hi; e += step) out.push_back(std::ldexp(1.0, e));
    return out;
}

namespace {

json vec(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json mat_rows(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
    return rows;
}

}  // namespace

std::string TrainedModel::to_json() const {
    json j;
    j["kind"] = std::string(classify::to_string(kind));
    j["features"] = feature_names;
    if (const auto* g = std::get_if<GnbModel>(&model)) {
        j["mean"] = mat_rows(g->mean);
        j["var"] = mat_rows(g->var);
        j["log_prior"] = {g->log_prior[0], g->log_prior[1]};
    } else if (const auto* k = std::get_if<KsvmModel>(&model)) {
        j["gamma"] = k->gamma;
        j["cost"] = k->cost;
        j["bias"] = k->bias;
        j["support_indices"] = k->support_indices;
        j["dual_coef"] = vec(k->dual_coef);
        j["support"] = mat_rows(k->support);
    } else {
        const auto& m = std::get<GlmnetModel>(model);
        j["alpha"] = m.path.alpha;
        j["lambda"] = m.path.lambdas.empty() ? 0.0 : m.path.lambdas[m.chosen];
        j["chosen"] = m.chosen;
        j["intercept"] = m.intercept;
        j["beta"] = vec(m.beta);
        j["path"] = {{"lambda", m.path.lambdas},
                     {"intercept", vec(m.path.intercepts)},
                     {"beta", mat_rows(m.path.betas.transpose())},
                     {"deviance_ratio", m.path.deviance_ratio},
                     {"saturated", m.path.saturated}};
    }
    return j.dump();
}

Eigen::VectorXd predict_scores(const TrainedModel& model, const Eigen::MatrixXd& x) {
    if (static_cast<std::size_t>(x.cols()) != model.feature_names.size())
        throw ValidationError("predict_scores: expected " + std::to_string(model.feature_names.size()) +
                              " feature columns, got " + std::to_string(x.cols()));
    if (const auto* g = std::get_if<GnbModel>(&model.model)) return gnb_predict(*g, x);
    if (const auto* k = std::get_if<KsvmModel>(&model.model)) return ksvm_predict(*k, x);
    const auto& m = std::get<GlmnetModel>(model.model);
    Eigen::VectorXd eta = (x * m.beta).array() + m.intercept;
    return eta.unaryExpr([](double t) { return logistic(t); });
}

Eigen::VectorXd predict_scores(const TrainedModel& model, const Eigen::MatrixXd& x,
                               std::span<const std::string> feature_names) {
    if (feature_names.size() != model.feature_names.size())
        throw ValidationError("predict_scores: column count differs from the training columns");
    for (std::size_t j = 0; j < feature_names.size(); ++j)
        if (feature_names[j] != model.feature_names[j])
            throw ValidationError("predict_scores: column " + std::to_string(j) + " is '" + feature_names[j] +
                                  "', model expects '" + model.feature_names[j] + "'");
    return predict_scores(model, x);
}

}  // namespace biomark::classify
