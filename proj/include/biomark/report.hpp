#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "biomark/dataset.hpp"
#include "biomark/text.hpp"

namespace biomark::report {

/// Per-feature summary of GLMNET coefficients across replicas.
struct CoefficientSummary {
    std::vector<std::string> features;
    Eigen::VectorXd mean;
    Eigen::VectorXd sd;
    Eigen::VectorXd z;             // mean / max(sd, 1e-12)
    Eigen::VectorXd frequency;     // fraction of replicas with a nonzero coefficient
    std::vector<char> degenerate;  // sd below the floor

    /// Indices of the n largest |z|, ties by feature order.
    std::vector<std::size_t> top(std::size_t n) const;
    std::string to_csv() const;
};

inline constexpr double kSdFloor = 1e-12;

/// traces[r] holds replica r's coefficient vector aligned with `features`.
CoefficientSummary aggregate_coefficients(const std::vector<std::string>& features,
                                          const std::vector<Eigen::VectorXd>& traces);

/// region, band, feature, z for every column carrying both tags.
std::string region_band_table(const CoefficientSummary& s, const std::vector<ColumnInfo>& columns);

struct Bar {
    std::string label;
    std::string group;
    double value = 0.0;
    double error = 0.0;
};

/// Plain SVG bar chart with error whiskers. Bars keep their given order and
/// are separated by a gap wherever the group changes.
std::string svg_bars(const std::string& title, const std::vector<Bar>& bars, double y_min, double y_max);

/// Sorted-coefficient chart of the top entries by |z| (mean +- sd bars).
std::string svg_coefficients(const std::string& title, const CoefficientSummary& s, std::size_t top_n = 20);

enum class Format { Csv, Json, SvgBars };
Format parse_format(std::string_view s);

/// Summaries of a long-format results table: summary.csv, summary.json and
/// bars_<response>.svg (holdout, one bar per configuration grouped by
/// classifier). Returns the files written. An empty table is an error and
/// writes nothing.
std::vector<std::filesystem::path> emit_report(const text::CsvTable& results, const std::set<Format>& formats,
                                               const std::filesystem::path& out_dir);

}  // namespace biomark::report
