#include "biomark/synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "biomark/dsp.hpp"
#include "biomark/error.hpp"
#include "biomark/rng.hpp"
#include "biomark/text.hpp"

namespace biomark::synth {

void SynthConfig::validate() const {
    if (rows == 0) throw ValidationError("synth: rows must be positive");
    if (positives == 0 || positives >= rows) throw ValidationError("synth: positives must be in (0, rows)");
    if (informative + noise == 0) throw ValidationError("synth: no feature columns requested");
    if (site_shift_columns != "noise" && site_shift_columns != "informative" && site_shift_columns != "all")
        throw ValidationError("synth: site_shift_columns must be noise, informative or all");
    for (double v : {effect_size, site_shift, age_effect})
        if (!std::isfinite(v)) throw ValidationError("synth: effect sizes must be finite");
}

std::string Truth::to_json() const {
    nlohmann::json j;
    j["informative"] = informative;
    j["effect_size"] = effect_size;
    j["site_shift"] = site_shift;
    j["site_shift_columns"] = site_shift_columns;
    j["age_effect"] = age_effect;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

namespace {

std::string padded(const char* prefix, std::size_t i, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

}  // namespace

SynthResult synth_dataset(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t n = cfg.rows;
    const std::size_t p = cfg.informative + cfg.noise;

    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(padded("sub-", i + 1, 4));

    std::vector<int> labels(n, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(cfg.positives), 1);
    rng.shuffle(std::span<int>(labels));

    CovariateColumn age{"age", CovariateKind::Continuous, {}, {}};
    CovariateColumn sex{"sex", CovariateKind::Categorical, {}, {}};
    CovariateColumn site{"site", CovariateKind::Categorical, {}, {}};
    CovariateColumn tiv{"tiv", CovariateKind::Continuous, {}, {}};
    CovariateColumn movement{"movement", CovariateKind::Continuous, {}, {}};
    std::vector<double> age_z(n);
    std::vector<int> site_of(n);
    for (std::size_t i = 0; i < n; ++i) {
        age_z[i] = rng.normal();
        age.numeric.emplace_back(72.0 + 7.0 * age_z[i]);
        sex.level.emplace_back(rng.uniform() < 0.5 ? "F" : "M");
        site_of[i] = rng.uniform() < 0.5 ? 1 : 2;
        site.level.emplace_back(std::to_string(site_of[i]));
        tiv.numeric.emplace_back(rng.normal(1500.0, 150.0));
        movement.numeric.emplace_back(std::abs(rng.normal(0.5, 0.2)));
    }

    // Informative columns sit at shuffled positions.
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<char> is_informative(p, 0);
    for (std::size_t k = 0; k < cfg.informative; ++k) is_informative[order[k]] = 1;

    const auto bands = dsp::default_bands();
    std::vector<ColumnInfo> cols;
    for (std::size_t j = 0; j < p; ++j) {
        ColumnInfo c;
        c.name = padded("feat_", j, 3);
        c.modality = cfg.modality;
        c.band = bands[j % bands.size()].name;
        c.region = padded("R", j / bands.size(), 2);
        cols.push_back(c);
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (std::size_t j = 0; j < p; ++j) {
        const bool shifted = cfg.site_shift_columns == "all" ||
                             (cfg.site_shift_columns == "noise" ? !is_informative[j] : is_informative[j]);
        for (std::size_t i = 0; i < n; ++i) {
            double v = rng.normal();
            if (is_informative[j] && labels[i] == 1) v += cfg.effect_size;
            if (shifted && site_of[i] == 2) v += cfg.site_shift;
            v += cfg.age_effect * age_z[i];
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }

    Truth truth;
    for (std::size_t j = 0; j < p; ++j)
        if (is_informative[j]) truth.informative.push_back(cols[j].qualified());
    truth.effect_size = cfg.effect_size;
    truth.site_shift = cfg.site_shift;
    truth.site_shift_columns = cfg.site_shift_columns;
    truth.age_effect = cfg.age_effect;
    truth.seed = cfg.seed;

    FeatureMatrix fm(ids, std::move(cols), std::move(x));
    CovariateTable ct(ids, {std::move(age), std::move(sex), std::move(site), std::move(tiv), std::move(movement)});
    LabelVector lv{ids, labels};
    return {DatasetBundle(std::move(fm), std::move(ct), std::move(lv)), std::move(truth)};
}

void write_synth(const SynthResult& result, const std::filesystem::path& dir) {
    DatasetPaths paths{dir / "features.csv", dir / "covariates.csv", dir / "labels.csv", dir / "columns.json"};
    save_dataset(result.data, paths);
    text::write_file_atomic(dir / "truth.json", result.truth.to_json());
}

}  // namespace biomark::synth
