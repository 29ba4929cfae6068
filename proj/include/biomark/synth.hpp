#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biomark/dataset.hpp"

namespace biomark::synth {

/// Two-site generator for desk-scale checks.
struct SynthConfig {
    std::size_t rows = 324;
    std::size_t positives = 158;          // label 1 (MCI)
    std::size_t informative = 5;
    std::size_t noise = 200;
    /// Class-1 mean shift of each informative feature, in units of its SD.
    double effect_size = 1.0;
    /// Added to site-"2" rows of the shifted columns.
    double site_shift = 0.0;
    /// "noise", "informative" or "all".
    std::string site_shift_columns = "noise";
    /// Per-SD-of-age slope added to every column.
    double age_effect = 0.0;
    Modality modality = Modality::MAG;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Truth {
    std::vector<std::string> informative;   // qualified column names
    double effect_size = 0.0;
    double site_shift = 0.0;
    std::string site_shift_columns;
    double age_effect = 0.0;
    std::uint64_t seed = 0;

    std::string to_json() const;
};

struct SynthResult {
    DatasetBundle data;
    Truth truth;
};

SynthResult synth_dataset(const SynthConfig& config);

/// Writes features.csv, covariates.csv, labels.csv, columns.json and truth.json.
void write_synth(const SynthResult& result, const std::filesystem::path& dir);

}  // namespace biomark::synth
