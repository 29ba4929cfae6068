#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace biomark {

enum class Modality { MAG, GRAD, MRI, OTHER };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

/// Per-column metadata. The qualified name "modality/name" is the identity
/// used for uniqueness, since MAG and GRAD share sensor-name stems.
struct ColumnInfo {
    std::string name;
    Modality modality = Modality::OTHER;
    std::optional<std::string> band;
    std::optional<std::string> region;

    std::string qualified() const;
};

/// Participants x features. Rows are participant IDs, values are finite.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    /// Validates uniqueness of IDs and qualified column names and finiteness.
    FeatureMatrix(std::vector<std::string> ids, std::vector<ColumnInfo> columns, Eigen::MatrixXd values);

    std::size_t rows() const { return ids_.size(); }
    std::size_t cols() const { return columns_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<ColumnInfo>& columns() const { return columns_; }
    const Eigen::MatrixXd& values() const { return values_; }

    /// Index by qualified name ("MAG/x") or, when unambiguous, by bare name.
    std::optional<std::size_t> find_column(std::string_view name) const;

    FeatureMatrix select_columns(std::span<const std::size_t> idx) const;
    FeatureMatrix select_rows(std::span<const std::size_t> idx) const;
    FeatureMatrix with_values(Eigen::MatrixXd values) const;

private:
    std::vector<std::string> ids_;
    std::vector<ColumnInfo> columns_;
    Eigen::MatrixXd values_;
};

enum class CovariateKind { Continuous, Categorical };

/// Known covariate schema: age, tiv and movement are continuous; sex and site categorical.
CovariateKind covariate_kind(std::string_view name);
bool is_known_covariate(std::string_view name);

struct CovariateColumn {
    std::string name;
    CovariateKind kind = CovariateKind::Continuous;
    std::vector<std::optional<double>> numeric;      // Continuous
    std::vector<std::optional<std::string>> level;   // Categorical
};

class CovariateTable {
public:
    CovariateTable() = default;
    CovariateTable(std::vector<std::string> ids, std::vector<CovariateColumn> columns);

    std::size_t rows() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<CovariateColumn>& columns() const { return columns_; }
    const CovariateColumn* find(std::string_view name) const;

    CovariateTable select_rows(std::span<const std::size_t> idx) const;

private:
    std::vector<std::string> ids_;
    std::vector<CovariateColumn> columns_;
};

/// 0 = HC, 1 = MCI.
struct LabelVector {
    std::vector<std::string> ids;
    std::vector<int> values;

    std::size_t count(int cls) const;
    LabelVector select_rows(std::span<const std::size_t> idx) const;
};

/// Features, covariates and labels sharing one ordered participant list.
/// Immutable after construction.
class DatasetBundle {
public:
    DatasetBundle() = default;
    DatasetBundle(FeatureMatrix features, CovariateTable covariates, LabelVector labels);

    const FeatureMatrix& features() const { return features_; }
    const CovariateTable& covariates() const { return covariates_; }
    const LabelVector& labels() const { return labels_; }
    std::size_t size() const { return features_.rows(); }

    DatasetBundle select_rows(std::span<const std::size_t> idx) const;
    DatasetBundle with_features(FeatureMatrix features) const;

private:
    FeatureMatrix features_;
    CovariateTable covariates_;
    LabelVector labels_;
};

/// Declared categorical level sets. A covariate absent from the map accepts any level.
struct CovariateSchema {
    std::map<std::string, std::vector<std::string>, std::less<>> levels = {{"sex", {"F", "M"}}};
};

struct DatasetPaths {
    std::filesystem::path features;
    std::filesystem::path covariates;
    std::filesystem::path labels;
    std::optional<std::filesystem::path> sidecar;
};

/// Loads and validates the three CSV files (plus optional column sidecar).
/// Rows are reordered lexicographically by participant ID.
DatasetBundle load_dataset(const DatasetPaths& paths, const CovariateSchema& schema = {});

FeatureMatrix load_features(const std::filesystem::path& path,
                            const std::optional<std::filesystem::path>& sidecar = std::nullopt);

/// Writes features.csv, covariates.csv, labels.csv and columns.json.
void save_dataset(const DatasetBundle& bundle, const DatasetPaths& paths);

std::string features_to_csv(const FeatureMatrix& fm);
std::string covariates_to_csv(const CovariateTable& ct);
std::string labels_to_csv(const LabelVector& lv);
std::string sidecar_to_json(const FeatureMatrix& fm);

enum class CombineMode { MAG_ONLY, GRAD_ONLY, MRI_ONLY, MAG_MRI, GRAD_MRI, MAG_GRAD_MRI };

std::string_view to_string(CombineMode m);
CombineMode parse_combine_mode(std::string_view s);
std::vector<Modality> modalities_of(CombineMode m);

/// Column-wise concatenation of the selected modalities across bundles.
/// Participant lists and labels must match; covariates are merged.
DatasetBundle combine_features(std::span<const DatasetBundle> bundles, CombineMode mode);

/// Keeps only the columns carrying the given modality tag.
DatasetBundle project_modality(const DatasetBundle& bundle, Modality modality);

}  // namespace biomark
