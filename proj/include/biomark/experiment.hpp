#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "biomark/cv.hpp"
#include "biomark/dataset.hpp"
#include "biomark/harmonize.hpp"

namespace biomark::experiment {

struct DatasetEntry {
    Modality modality = Modality::MAG;
    /// Empty matches every localization tag (e.g. MRI tables).
    std::string localization;
    DatasetPaths paths;
};

struct GridAxes {
    std::vector<classify::ClassifierKind> classifiers;
    /// Single-modality sensor tags, e.g. MAG, GRAD, MRI.
    std::vector<std::string> sensors;
    /// Multi-modality combinations ("MAG+MRI"); used as sensor tags when set.
    std::vector<CombineMode> combinations;
    std::vector<harmonize::CorrectionType> corrections;
    std::vector<std::string> localizations;
};

struct ExperimentManifest {
    std::filesystem::path source;
    std::uint64_t seed = 0;
    std::size_t k = 10;
    std::size_t replicas = 100;
    std::filesystem::path output_dir;   // empty when the manifest leaves it to the caller
    std::vector<DatasetEntry> datasets;
    GridAxes grid;
    std::vector<harmonize::ModalityRoster> rosters = harmonize::default_rosters();
    CovariateSchema schema;
    classify::ClassifierSpec classifier_defaults;
    std::optional<bool> ffsel;
    std::size_t relieff_neighbors = 10;
    std::vector<std::string> anova_factors;   // empty: every grid axis with >= 2 levels
    std::vector<std::pair<std::string, std::string>> anova_interactions;
    double alpha = 0.05;
};

/// Parses and validates a JSON manifest. Relative paths resolve against the
/// manifest's directory. Unknown keys are rejected by name.
ExperimentManifest parse_manifest(const std::filesystem::path& path);
ExperimentManifest parse_manifest_text(std::string_view json, const std::filesystem::path& base_dir);

/// One resolved grid cell.
struct GridCell {
    cv::RunConfig config;
    CombineMode mode = CombineMode::MAG_ONLY;
    std::vector<std::size_t> datasets;   // indices into manifest.datasets
};

/// Cells in axis order: classifier, sensor/combination, correction, localization.
std::vector<GridCell> expand_grid(const ExperimentManifest& m);

struct RunOptions {
    std::size_t jobs = 1;
    /// Stop after this many cells have been processed (interrupt simulation).
    std::optional<std::size_t> stop_after;
    std::function<void(const std::string&)> log;
};

struct CellFailure {
    std::string config_id;
    std::string message;
};

struct GridOutcome {
    std::size_t computed = 0;
    std::size_t skipped = 0;
    std::vector<CellFailure> failures;
    bool interrupted = false;
    std::vector<std::filesystem::path> outputs;
};

/// Runs every cell (skipping cells whose stored digest still matches), then
/// writes results.csv, the ANOVA report, coefficient summaries and charts.
GridOutcome run_experiment_grid(const ExperimentManifest& m, const RunOptions& options = {});

}  // namespace biomark::experiment
