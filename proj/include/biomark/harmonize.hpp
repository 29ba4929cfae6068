#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "biomark/dataset.hpp"

namespace biomark::harmonize {

enum class CorrectionType { None, Residuals, ZScore };

std::string_view to_string(CorrectionType t);
CorrectionType parse_correction(std::string_view s);

struct HarmonizationOptions {
    CorrectionType type = CorrectionType::Residuals;
    std::vector<std::string> covariates;
    /// Maximum total degree of the continuous-covariate monomials. Categorical
    /// covariates always enter at degree 1.
    int degree = 2;
    /// Adds categorical x continuous (degree-1) interaction terms.
    bool categorical_interactions = false;
};

/// How one covariate enters the design: continuous values are centred and
/// scaled with training statistics; categorical levels are one-hot with
/// levels[0] as the dropped reference.
struct CovariateEncoding {
    std::string name;
    CovariateKind kind = CovariateKind::Continuous;
    double center = 0.0;
    double scale = 1.0;
    std::vector<std::string> levels;
};

struct HarmonizationModel {
    CorrectionType type = CorrectionType::Residuals;
    int degree = 2;
    bool categorical_interactions = false;
    std::vector<CovariateEncoding> covariates;
    std::vector<std::string> terms;          // design column names, "1" first
    std::vector<ColumnInfo> features;
    Eigen::MatrixXd mean_coef;               // terms x features
    Eigen::MatrixXd var_coef;                // terms x features, z-score type only
    Eigen::VectorXd var_floor;               // per feature, z-score type only

    std::string to_json() const;
    static HarmonizationModel from_json(std::string_view json);
    /// Digest of the serialized parameters.
    std::uint64_t digest() const;
};

/// Expands the covariates of `table` into the model's design matrix.
/// Throws on missing values and on levels unseen at fit time.
Eigen::MatrixXd design_matrix(const CovariateTable& table, const HarmonizationModel& model);

HarmonizationModel fit_harmonization(const DatasetBundle& train, const HarmonizationOptions& options);

/// Returns the model's feature columns corrected with fit-time parameters only.
FeatureMatrix apply_harmonization(const DatasetBundle& data, const HarmonizationModel& model);

struct ZScoreParams {
    std::vector<ColumnInfo> features;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;          // floored at kStdFloor
    std::vector<char> degenerate;  // sd hit the floor: column maps to 0

    std::uint64_t digest() const;
};

inline constexpr double kStdFloor = 1e-12;

ZScoreParams fit_plain_zscore(const FeatureMatrix& train);
FeatureMatrix apply_plain_zscore(const FeatureMatrix& data, const ZScoreParams& params);

/// Covariate roster for one modality's columns.
struct ModalityRoster {
    Modality modality = Modality::OTHER;
    std::vector<std::string> covariates;
    int degree = 2;
    bool categorical_interactions = false;
};

/// Per-modality harmonization of a (possibly combined) feature matrix: each
/// modality's columns are corrected with their own covariate roster.
struct GroupedModel {
    std::vector<std::vector<std::size_t>> column_groups;
    std::vector<HarmonizationModel> models;
    std::size_t n_columns = 0;

    std::uint64_t digest() const;
};

/// Default rosters: MEG {age, site, movement}, MRI {age, sex, tiv}, OTHER {age}.
std::vector<ModalityRoster> default_rosters();

GroupedModel fit_grouped(const DatasetBundle& train, CorrectionType type, const std::vector<ModalityRoster>& rosters);
FeatureMatrix apply_grouped(const DatasetBundle& data, const GroupedModel& model);

}  // namespace biomark::harmonize
