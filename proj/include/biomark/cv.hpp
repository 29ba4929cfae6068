#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biomark/classifiers.hpp"
#include "biomark/dataset.hpp"
#include "biomark/harmonize.hpp"
#include "biomark/metrics.hpp"

namespace biomark::cv {

struct RunConfig {
    std::string config_id;
    classify::ClassifierSpec classifier;
    harmonize::CorrectionType correction = harmonize::CorrectionType::None;
    std::vector<harmonize::ModalityRoster> rosters = harmonize::default_rosters();
    /// Condition tags carried into the results table.
    std::string sensor;
    std::string localization;
    /// ReliefF filter before training; unset means on for GNB/KSVM, off for GLMNET.
    std::optional<bool> ffsel;
    std::size_t relieff_neighbors = 10;
    std::size_t k = 10;
    std::size_t replicas = 100;
    std::uint64_t master_seed = 0;

    bool use_ffsel() const;
    void validate() const;
};

struct ReplicaResult {
    std::size_t replica = 0;       // 1-based
    std::uint64_t seed = 0;
    StatBlock crossval;
    StatBlock holdout;
    /// GLMNET only: one column per outer fold, refit coefficients on the
    /// post-correction feature scale; unselected features are 0.
    Eigen::MatrixXd coefficients;
    /// Outer folds where ReliefF kept nothing and all features were used.
    std::size_t ffsel_fallbacks = 0;
};

struct RunResultSet {
    RunConfig config;
    std::vector<std::string> feature_names;   // qualified column names
    std::vector<ReplicaResult> replicas;      // ordered by replica index
};

/// One replica of the nested K-fold procedure with the given seed.
ReplicaResult nested_cv_run(const RunConfig& config, const DatasetBundle& data, std::uint64_t seed);

/// R replicas, replica r seeded with stable_hash(master_seed, r). Output is
/// identical for any `jobs`.
RunResultSet monte_carlo_run(const RunConfig& config, const DatasetBundle& data, std::size_t jobs = 1);

/// Per-feature signed z across the outer folds of one replica: mean / max(sd, 1e-12).
Eigen::VectorXd fold_z(const ReplicaResult& r);

inline const std::vector<std::string> kResultColumns = {"config_id", "classifier", "sensor",    "correction",
                                                        "localization", "replica",  "split", "acc",
                                                        "sens",      "spec",       "auc"};

/// Long-format rows (crossval then holdout per replica), header included.
std::string results_to_csv(std::span<const RunResultSet> sets);

/// Mean of one split's stat blocks over replicas.
StatBlock mean_stats(const RunResultSet& set, bool holdout);

}  // namespace biomark::cv
