// biomark command-line front end.
//
// Exit codes: 0 success, 1 invalid input or failed command, 2 grid finished
// with failed cells (the other cells' outputs are kept).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <set>

#include "biomark/anova.hpp"
#include "biomark/dataset.hpp"
#include "biomark/dsp.hpp"
#include "biomark/error.hpp"
#include "biomark/experiment.hpp"
#include "biomark/harmonize.hpp"
#include "biomark/relieff.hpp"
#include "biomark/report.hpp"
#include "biomark/synth.hpp"
#include "biomark/text.hpp"

namespace fs = std::filesystem;
using namespace biomark;

namespace {

constexpr const char* kOutputEnv = "BIOMARK_OUTPUT_DIR";

fs::path default_output(const fs::path& fallback) {
    if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
    return fallback;
}

struct DataArgs {
    std::string features, covariates, labels, sidecar;

    void add(CLI::App* app) {
        app->add_option("--features", features, "features.csv")->required()->check(CLI::ExistingFile);
        app->add_option("--covariates", covariates, "covariates.csv")->required()->check(CLI::ExistingFile);
        app->add_option("--labels", labels, "labels.csv")->required()->check(CLI::ExistingFile);
        app->add_option("--sidecar", sidecar, "columns.json with per-column metadata")->check(CLI::ExistingFile);
    }
    DatasetBundle load() const {
        DatasetPaths p{features, covariates, labels, std::nullopt};
        if (!sidecar.empty()) p.sidecar = sidecar;
        return load_dataset(p);
    }
};

int cmd_extract(const std::vector<std::string>& epochs, const std::vector<std::string>& ids, const std::string& modality,
                const fs::path& out) {
    if (!ids.empty() && ids.size() != epochs.size())
        throw ValidationError("extract: --id must be given once per --epochs file");
    const auto bands = dsp::default_bands();
    const Modality mod = parse_modality(modality);
    std::vector<std::string> row_ids;
    std::vector<ColumnInfo> columns;
    std::vector<std::string> channel_names;
    Eigen::MatrixXd values;
    for (std::size_t f = 0; f < epochs.size(); ++f) {
        const auto set = dsp::read_epoch_file(epochs[f]);
        const Eigen::MatrixXd rel = dsp::band_relative_power(set, bands);
        if (f == 0) {
            channel_names = set.channel_names;
            for (const auto& ch : channel_names)
                for (const auto& b : bands) columns.push_back({ch + "_" + b.name, mod, b.name, ch});
            values.resize(static_cast<Eigen::Index>(epochs.size()), static_cast<Eigen::Index>(columns.size()));
        } else if (set.channel_names != channel_names) {
            throw ValidationError("extract: " + epochs[f] + " has a different channel list than " + epochs[0]);
        }
        Eigen::Index c = 0;
        for (Eigen::Index ch = 0; ch < rel.rows(); ++ch)
            for (Eigen::Index b = 0; b < rel.cols(); ++b) values(static_cast<Eigen::Index>(f), c++) = rel(ch, b);
        row_ids.push_back(ids.empty() ? fs::path(epochs[f]).stem().string() : ids[f]);
    }
    const FeatureMatrix fm(row_ids, columns, values);
    text::write_file_atomic(out / "features.csv", features_to_csv(fm));
    text::write_file_atomic(out / "columns.json", sidecar_to_json(fm));
    std::cout << "wrote " << (out / "features.csv").string() << " (" << fm.rows() << " x " << fm.cols() << ")\n";
    return 0;
}

int cmd_harmonize(const DataArgs& data, const std::string& type, int degree, const std::vector<std::string>& covariates,
                  bool interactions, const fs::path& out) {
    const auto bundle = data.load();
    auto rosters = harmonize::default_rosters();
    for (auto& r : rosters) {
        r.degree = degree;
        r.categorical_interactions = interactions;
        if (!covariates.empty()) r.covariates = covariates;
    }
    const auto ct = harmonize::parse_correction(type);
    FeatureMatrix corrected = bundle.features();
    std::string model_json = "[]\n";
    if (ct != harmonize::CorrectionType::None) {
        const auto model = harmonize::fit_grouped(bundle, ct, rosters);
        corrected = harmonize::apply_grouped(bundle, model);
        model_json = "[";
        for (std::size_t i = 0; i < model.models.size(); ++i)
            model_json += (i ? ",\n" : "\n") + model.models[i].to_json();
        model_json += "\n]\n";
    }
    text::write_file_atomic(out / "features.csv", features_to_csv(corrected));
    text::write_file_atomic(out / "columns.json", sidecar_to_json(corrected));
    text::write_file_atomic(out / "harmonization.json", model_json);
    std::cout << "wrote " << (out / "features.csv").string() << " and harmonization.json\n";
    return 0;
}

int cmd_rank(const DataArgs& data, std::size_t neighbors, std::optional<std::size_t> samples, std::uint64_t seed,
             const fs::path& out) {
    const auto bundle = data.load();
    relieff::ReliefFConfig cfg;
    cfg.neighbors = neighbors;
    cfg.samples = samples;
    cfg.seed = seed;
    const auto r = relieff::relieff_rank(bundle.features().values(), bundle.labels().values, cfg);
    std::vector<std::size_t> order(r.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return r.scores[a] > r.scores[b]; });
    std::string csv = "feature,score\n";
    for (auto i : order) csv += text::csv_join({bundle.features().columns()[i].qualified(), text::format_double(r.scores[i])}) + "\n";
    text::write_file_atomic(out / "relieff.csv", csv);
    std::cout << "wrote " << (out / "relieff.csv").string();
    if (r.degenerate) std::cout << " (every feature constant, all scores 0)";
    std::cout << "\n";
    return 0;
}

int cmd_run(const std::string& manifest_path, std::optional<std::uint64_t> seed, const std::string& out_opt,
            std::size_t jobs, std::optional<std::size_t> stop_after) {
    auto m = experiment::parse_manifest(manifest_path);
    if (seed) m.seed = *seed;
    if (!out_opt.empty()) m.output_dir = out_opt;
    else if (m.output_dir.empty()) m.output_dir = default_output(fs::path(manifest_path).parent_path() / "out");
    experiment::RunOptions opt;
    opt.jobs = jobs;
    opt.stop_after = stop_after;
    opt.log = [](const std::string& s) { std::cerr << s << "\n"; };
    const auto outcome = experiment::run_experiment_grid(m, opt);
    std::cout << "cells computed " << outcome.computed << ", skipped " << outcome.skipped << ", failed "
              << outcome.failures.size() << "\n";
    for (const auto& f : outcome.failures) std::cout << "  failed " << f.config_id << ": " << f.message << "\n";
    if (outcome.interrupted) std::cout << "stopped early; rerun to resume\n";
    else std::cout << "outputs in " << m.output_dir.string() << "\n";
    return outcome.failures.empty() ? 0 : 2;
}

int cmd_anova(const std::string& results, const std::vector<std::string>& responses, const std::vector<std::string>& factors,
              const std::vector<std::string>& interactions, double alpha, const std::string& split, const fs::path& out) {
    const auto table = text::read_csv(results);
    std::vector<std::pair<std::string, std::string>> inter;
    for (const auto& s : interactions) {
        const auto colon = s.find(':');
        if (colon == std::string::npos) throw ValidationError("anova: interaction '" + s + "' must be written a:b");
        inter.emplace_back(s.substr(0, colon), s.substr(colon + 1));
    }
    std::vector<stats::ReportRow> rows;
    for (const auto& response : responses) {
        const auto obs = stats::observations_from_table(table, response, factors, split);
        const auto t = stats::nway_anova(obs, inter);
        std::cout << response << ":\n";
        for (const auto& term : t.terms)
            std::cout << "  " << term.name << "  F(" << term.df << "," << t.df_residual << ") = " << term.f
                      << "  p " << stats::format_p(term.p) << "\n";
        if (!t.note.empty()) std::cout << "  note: " << t.note << "\n";
        std::vector<stats::PairwiseContrast> contrasts;
        for (const auto& f : factors) {
            auto b = stats::bonferroni_pairwise(obs, f, alpha);
            std::string note;
            auto tk = stats::tukey_hsd(obs, f, alpha, &note);
            if (!note.empty()) std::cout << "  note (" << f << "): " << note << "\n";
            contrasts.insert(contrasts.end(), b.begin(), b.end());
            contrasts.insert(contrasts.end(), tk.begin(), tk.end());
        }
        auto r = stats::report_rows(response, t, contrasts);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    std::cout << stats::kReplicaCaveat << "\n";
    text::write_file_atomic(out / "anova_report.csv", stats::report_to_csv(rows));
    std::cout << "wrote " << (out / "anova_report.csv").string() << "\n";
    return 0;
}

int cmd_report(const std::string& results, const std::vector<std::string>& formats, const fs::path& out) {
    std::set<report::Format> fmt;
    for (const auto& f : formats) fmt.insert(report::parse_format(f));
    const auto files = report::emit_report(text::read_csv(results), fmt, out);
    for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
    return 0;
}

int cmd_synth(const synth::SynthConfig& cfg, const fs::path& out) {
    const auto r = synth::synth_dataset(cfg);
    synth::write_synth(r, out);
    std::cout << "wrote synthetic dataset (" << cfg.rows << " rows) to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"biomark: band-power biomarker classification with nested Monte-Carlo cross-validation"};
    app.require_subcommand(1);
    std::string out;
    const std::string out_help = std::string("output directory (default: $") + kOutputEnv + " or .)";

    auto* extract = app.add_subcommand("extract", "epoch files -> relative band-power features.csv");
    std::vector<std::string> epochs, ids;
    std::string modality = "MAG";
    extract->add_option("--epochs", epochs, "float32 epoch file (sidecar <file>.json); repeat per participant")
        ->required()->check(CLI::ExistingFile);
    extract->add_option("--id", ids, "participant ID per epoch file (default: file stem)");
    extract->add_option("--modality", modality, "MAG, GRAD, MRI or OTHER");
    extract->add_option("--out", out, out_help);

    DataArgs data;
    auto* harm = app.add_subcommand("harmonize", "remove covariate effects from a dataset's features");
    data.add(harm);
    std::string type = "residuals";
    int degree = 2;
    std::vector<std::string> covs;
    bool interactions = false;
    harm->add_option("--type", type, "none, residuals or zscore");
    harm->add_option("--degree", degree, "polynomial degree of the continuous covariates")->check(CLI::PositiveNumber);
    harm->add_option("--covariate", covs, "override the per-modality roster (repeatable)");
    harm->add_flag("--categorical-interactions", interactions, "add categorical x continuous terms");
    harm->add_option("--out", out, out_help);

    auto* rank = app.add_subcommand("rank", "ReliefF feature ranking");
    DataArgs rank_data;
    rank_data.add(rank);
    bool relieff_flag = true;
    std::size_t neighbors = 10;
    std::optional<std::size_t> samples;
    std::uint64_t rank_seed = 0;
    rank->add_flag("--relieff", relieff_flag, "rank with ReliefF (the only ranker)");
    rank->add_option("--neighbors", neighbors, "nearest hits/misses J");
    rank->add_option("--relieff-L", samples, "sample L rows with replacement instead of using every row");
    rank->add_option("--seed", rank_seed, "seed for --relieff-L sampling");
    rank->add_option("--out", out, out_help);

    auto* run = app.add_subcommand("run", "run an experiment manifest");
    std::string manifest;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::optional<std::size_t> stop_after;
    run->add_option("manifest", manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", seed, "override the manifest seed");
    run->add_option("--jobs", jobs, "grid cells run concurrently")->check(CLI::PositiveNumber);
    run->add_option("--stop-after", stop_after, "process at most this many cells, then stop");
    run->add_option("--out", out, "output directory (default: manifest output_dir, then $" + std::string(kOutputEnv) + ")");

    auto* anova = app.add_subcommand("anova", "N-way ANOVA with Bonferroni and Tukey post-hoc tests");
    std::string results;
    std::vector<std::string> responses = {"acc", "sens", "spec", "auc"};
    std::vector<std::string> factors;
    std::vector<std::string> inter;
    double alpha = 0.05;
    std::string split = "holdout";
    anova->add_option("--results", results, "long-format results.csv")->required()->check(CLI::ExistingFile);
    anova->add_option("--response", responses, "acc, sens, spec or auc (repeatable)");
    anova->add_option("--factor", factors, "classifier, sensor, correction or localization (repeatable)")->required();
    anova->add_option("--interaction", inter, "a:b interaction term (repeatable)");
    anova->add_option("--alpha", alpha, "family-wise level");
    anova->add_option("--split", split, "holdout or crossval");
    anova->add_option("--out", out, out_help);

    auto* rep = app.add_subcommand("report", "summary tables and bar charts from results.csv");
    std::string rep_results;
    std::vector<std::string> formats = {"csv", "json", "svg-bars"};
    rep->add_option("--results", rep_results, "long-format results.csv")->required()->check(CLI::ExistingFile);
    rep->add_option("--format", formats, "csv, json and/or svg-bars");
    rep->add_option("--out", out, out_help);

    auto* syn = app.add_subcommand("synth", "write a synthetic two-site dataset");
    synth::SynthConfig sc;
    std::string syn_modality = "MAG";
    syn->add_option("--rows", sc.rows);
    syn->add_option("--positives", sc.positives);
    syn->add_option("--informative", sc.informative);
    syn->add_option("--noise", sc.noise);
    syn->add_option("--effect-size", sc.effect_size);
    syn->add_option("--site-shift", sc.site_shift);
    syn->add_option("--site-shift-columns", sc.site_shift_columns, "noise, informative or all");
    syn->add_option("--age-effect", sc.age_effect);
    syn->add_option("--modality", syn_modality);
    syn->add_option("--seed", sc.seed);
    syn->add_option("--out", out, out_help);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const fs::path dir = out.empty() ? default_output(".") : fs::path(out);
        if (*extract) return cmd_extract(epochs, ids, modality, dir);
        if (*harm) return cmd_harmonize(data, type, degree, covs, interactions, dir);
        if (*rank) return cmd_rank(rank_data, neighbors, samples, rank_seed, dir);
        if (*run) return cmd_run(manifest, seed, out, jobs, stop_after);
        if (*anova) return cmd_anova(results, responses, factors, inter, alpha, split, dir);
        if (*rep) return cmd_report(rep_results, formats, dir);
        if (*syn) {
            sc.modality = parse_modality(syn_modality);
            return cmd_synth(sc, dir);
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
