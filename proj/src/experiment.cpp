#include "biomark/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <mutex>
#include <set>

#include "biomark/anova.hpp"
#include "biomark/error.hpp"
#include "biomark/parallel.hpp"
#include "biomark/report.hpp"
#include "biomark/text.hpp"

namespace biomark::experiment {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!obj.is_object()) throw ValidationError("manifest: " + where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ValidationError("manifest: unknown key '" + key + "' in " + where);
    }
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key)) throw ValidationError("manifest: missing required key '" + key + "' in " + where);
    return obj.at(key);
}

template <class T>
T get(const json& v, const std::string& what) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ValidationError("manifest: '" + what + "' has the wrong type");
    }
}

std::vector<std::string> string_list(const json& v, const std::string& what) {
    if (!v.is_array()) throw ValidationError("manifest: '" + what + "' must be a list");
    std::vector<std::string> out;
    for (const auto& e : v) out.push_back(get<std::string>(e, what));
    return out;
}

std::vector<double> exponent_grid(const json& v, const std::string& what) {
    const auto e = get<std::vector<int>>(v, what);
    if (e.size() != 3) throw ValidationError("manifest: '" + what + "' must be [lo, hi, step]");
    return classify::pow2_grid(e[0], e[1], e[2]);
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

ExperimentManifest parse_manifest_text(std::string_view text_in, const fs::path& base_dir) {
    json root;
    try {
        root = json::parse(text_in);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest: invalid JSON: ") + e.what());
    }
    check_keys(root, {"seed", "K", "R", "output_dir", "datasets", "grid", "harmonization", "classifier_options", "anova",
                      "covariate_levels"},
               "manifest");
    ExperimentManifest m;
    m.seed = get<std::uint64_t>(require(root, "seed", "manifest"), "seed");
    if (root.contains("K")) m.k = get<std::size_t>(root["K"], "K");
    if (root.contains("R")) m.replicas = get<std::size_t>(root["R"], "R");
    if (m.k < 3) throw ValidationError("manifest: K must be >= 3");
    if (m.replicas < 1) throw ValidationError("manifest: R must be >= 1");
    if (root.contains("output_dir")) m.output_dir = resolve(base_dir, get<std::string>(root["output_dir"], "output_dir"));

    const json& ds = require(root, "datasets", "manifest");
    if (!ds.is_array() || ds.empty()) throw ValidationError("manifest: 'datasets' must be a non-empty list");
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::string where = "datasets[" + std::to_string(i) + "]";
        const json& d = ds[i];
        check_keys(d, {"modality", "localization", "features", "covariates", "labels", "sidecar"}, where);
        DatasetEntry e;
        e.modality = parse_modality(get<std::string>(require(d, "modality", where), where + ".modality"));
        if (d.contains("localization")) e.localization = get<std::string>(d["localization"], where + ".localization");
        e.paths.features = resolve(base_dir, get<std::string>(require(d, "features", where), where + ".features"));
        e.paths.covariates = resolve(base_dir, get<std::string>(require(d, "covariates", where), where + ".covariates"));
        e.paths.labels = resolve(base_dir, get<std::string>(require(d, "labels", where), where + ".labels"));
        if (d.contains("sidecar")) e.paths.sidecar = resolve(base_dir, get<std::string>(d["sidecar"], where + ".sidecar"));
        m.datasets.push_back(std::move(e));
    }

    const json& g = require(root, "grid", "manifest");
    check_keys(g, {"classifiers", "sensors", "combinations", "corrections", "localizations"}, "grid");
    for (const auto& c : string_list(require(g, "classifiers", "grid"), "grid.classifiers"))
        m.grid.classifiers.push_back(classify::parse_classifier(c));
    if (g.contains("sensors")) m.grid.sensors = string_list(g["sensors"], "grid.sensors");
    if (g.contains("combinations"))
        for (const auto& c : string_list(g["combinations"], "grid.combinations")) m.grid.combinations.push_back(parse_combine_mode(c));
    if (m.grid.sensors.empty() == m.grid.combinations.empty())
        throw ValidationError("manifest: grid needs exactly one of 'sensors' or 'combinations'");
    for (const auto& s : m.grid.sensors) {
        const Modality mod = parse_modality(s);
        if (mod == Modality::OTHER) throw ValidationError("manifest: sensor '" + s + "' must be MAG, GRAD or MRI");
    }
    if (g.contains("corrections")) {
        for (const auto& c : string_list(g["corrections"], "grid.corrections")) m.grid.corrections.push_back(harmonize::parse_correction(c));
    } else {
        m.grid.corrections = {harmonize::CorrectionType::None};
    }
    m.grid.localizations = g.contains("localizations") ? string_list(g["localizations"], "grid.localizations")
                                                       : std::vector<std::string>{""};
    if (m.grid.classifiers.empty() || m.grid.corrections.empty() || m.grid.localizations.empty())
        throw ValidationError("manifest: grid axes must be non-empty");

    if (root.contains("harmonization")) {
        const json& h = root["harmonization"];
        check_keys(h, {"degree", "categorical_interactions", "rosters"}, "harmonization");
        const int degree = h.contains("degree") ? get<int>(h["degree"], "harmonization.degree") : 2;
        const bool inter = h.contains("categorical_interactions") && get<bool>(h["categorical_interactions"], "harmonization.categorical_interactions");
        if (degree < 1) throw ValidationError("manifest: harmonization.degree must be >= 1");
        if (h.contains("rosters")) {
            check_keys(h["rosters"], {"MEG", "MAG", "GRAD", "MRI", "OTHER"}, "harmonization.rosters");
            std::map<Modality, std::vector<std::string>> given;
            for (const auto& [key, value] : h["rosters"].items()) {
                const auto covs = string_list(value, "harmonization.rosters." + key);
                for (const auto& c : covs)
                    if (!is_known_covariate(c)) throw ValidationError("manifest: unknown covariate '" + c + "' in roster " + key);
                if (key == "MEG") {
                    given.try_emplace(Modality::MAG, covs);
                    given.try_emplace(Modality::GRAD, covs);
                } else {
                    given[parse_modality(key)] = covs;
                }
            }
            for (auto& r : m.rosters)
                if (auto it = given.find(r.modality); it != given.end()) r.covariates = it->second;
        }
        for (auto& r : m.rosters) {
            r.degree = degree;
            r.categorical_interactions = inter;
        }
    }

    if (root.contains("classifier_options")) {
        const json& c = root["classifier_options"];
        check_keys(c, {"selection_metric", "ffsel", "relieff_neighbors", "ksvm", "glmnet"}, "classifier_options");
        if (c.contains("selection_metric"))
            m.classifier_defaults.metric = classify::parse_selection_metric(get<std::string>(c["selection_metric"], "selection_metric"));
        if (c.contains("ffsel") && !c["ffsel"].is_null()) m.ffsel = get<bool>(c["ffsel"], "ffsel");
        if (c.contains("relieff_neighbors")) m.relieff_neighbors = get<std::size_t>(c["relieff_neighbors"], "relieff_neighbors");
        if (c.contains("ksvm")) {
            const json& k = c["ksvm"];
            check_keys(k, {"gamma_exponents", "cost_exponents", "tolerance", "max_iterations"}, "classifier_options.ksvm");
            auto& o = m.classifier_defaults.ksvm;
            if (k.contains("gamma_exponents")) o.gammas = exponent_grid(k["gamma_exponents"], "ksvm.gamma_exponents");
            if (k.contains("cost_exponents")) o.costs = exponent_grid(k["cost_exponents"], "ksvm.cost_exponents");
            if (k.contains("tolerance")) o.tolerance = get<double>(k["tolerance"], "ksvm.tolerance");
            if (k.contains("max_iterations")) o.max_iterations = get<std::size_t>(k["max_iterations"], "ksvm.max_iterations");
        }
        if (c.contains("glmnet")) {
            const json& k = c["glmnet"];
            check_keys(k, {"alpha", "n_lambda", "lambda_min_ratio", "tolerance", "max_sweeps"}, "classifier_options.glmnet");
            auto& o = m.classifier_defaults.glmnet;
            if (k.contains("alpha")) o.alpha = get<double>(k["alpha"], "glmnet.alpha");
            if (k.contains("n_lambda")) o.n_lambda = get<std::size_t>(k["n_lambda"], "glmnet.n_lambda");
            if (k.contains("lambda_min_ratio")) o.lambda_min_ratio = get<double>(k["lambda_min_ratio"], "glmnet.lambda_min_ratio");
            if (k.contains("tolerance")) o.tolerance = get<double>(k["tolerance"], "glmnet.tolerance");
            if (k.contains("max_sweeps")) o.max_sweeps = get<std::size_t>(k["max_sweeps"], "glmnet.max_sweeps");
            if (!(o.alpha > 0.0 && o.alpha <= 1.0)) throw ValidationError("manifest: glmnet.alpha must be in (0, 1]");
        }
    }

    if (root.contains("anova")) {
        const json& a = root["anova"];
        check_keys(a, {"factors", "interactions", "alpha"}, "anova");
        const std::set<std::string> known = {"classifier", "sensor", "correction", "localization"};
        if (a.contains("factors")) m.anova_factors = string_list(a["factors"], "anova.factors");
        for (const auto& f : m.anova_factors)
            if (!known.count(f)) throw ValidationError("manifest: unknown ANOVA factor '" + f + "'");
        if (a.contains("interactions")) {
            for (const auto& pair : a["interactions"]) {
                const auto v = string_list(pair, "anova.interactions");
                if (v.size() != 2 || !known.count(v[0]) || !known.count(v[1]) || v[0] == v[1])
                    throw ValidationError("manifest: anova.interactions entries must be pairs of distinct factors");
                m.anova_interactions.emplace_back(v[0], v[1]);
            }
        }
        if (a.contains("alpha")) m.alpha = get<double>(a["alpha"], "anova.alpha");
    }

    if (root.contains("covariate_levels")) {
        const json& l = root["covariate_levels"];
        if (!l.is_object()) throw ValidationError("manifest: 'covariate_levels' must be an object");
        for (const auto& [key, value] : l.items()) {
            if (!is_known_covariate(key) || covariate_kind(key) != CovariateKind::Categorical)
                throw ValidationError("manifest: covariate_levels key '" + key + "' is not a categorical covariate");
            m.schema.levels[key] = string_list(value, "covariate_levels." + key);
        }
    }

    expand_grid(m);   // every cell must resolve
    return m;
}

ExperimentManifest parse_manifest(const fs::path& path) {
    std::string content;
    try {
        content = text::read_file(path);
    } catch (const Error& e) {
        throw ValidationError(std::string("manifest: ") + e.what());
    }
    ExperimentManifest m = parse_manifest_text(content, path.parent_path());
    m.source = path;
    return m;
}

namespace {

CombineMode single_mode(const std::string& sensor) {
    switch (parse_modality(sensor)) {
        case Modality::MAG: return CombineMode::MAG_ONLY;
        case Modality::GRAD: return CombineMode::GRAD_ONLY;
        case Modality::MRI: return CombineMode::MRI_ONLY;
        case Modality::OTHER: break;
    }
    throw ValidationError("sensor '" + sensor + "' has no single-modality mode");
}

std::string sanitize(std::string s) {
    for (char& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '+' || c == '.')) c = '-';
    return s;
}

}  // namespace

std::vector<GridCell> expand_grid(const ExperimentManifest& m) {
    std::vector<std::pair<std::string, CombineMode>> sensors;
    for (const auto& s : m.grid.sensors) sensors.emplace_back(std::string(to_string(parse_modality(s))), single_mode(s));
    for (auto c : m.grid.combinations) sensors.emplace_back(std::string(to_string(c)), c);

    std::vector<GridCell> cells;
    std::set<std::string> ids;
    for (auto kind : m.grid.classifiers)
        for (const auto& [sensor, mode] : sensors)
            for (auto corr : m.grid.corrections)
                for (const auto& loc : m.grid.localizations) {
                    GridCell cell;
                    cell.mode = mode;
                    auto& c = cell.config;
                    c.classifier = m.classifier_defaults;
                    c.classifier.kind = kind;
                    c.correction = corr;
                    c.rosters = m.rosters;
                    c.sensor = sensor;
                    c.localization = loc;
                    c.ffsel = m.ffsel;
                    c.relieff_neighbors = m.relieff_neighbors;
                    c.k = m.k;
                    c.replicas = m.replicas;
                    c.master_seed = m.seed;
                    std::string id = std::string(classify::to_string(kind)) + "_" + sensor + "_" +
                                     std::string(harmonize::to_string(corr));
                    if (!loc.empty()) id += "_" + loc;
                    c.config_id = sanitize(id);
                    if (!ids.insert(c.config_id).second)
                        throw ValidationError("manifest: grid produces duplicate configuration '" + c.config_id + "'");

                    for (Modality mod : modalities_of(mode)) {
                        std::optional<std::size_t> exact, wildcard;
                        for (std::size_t d = 0; d < m.datasets.size(); ++d) {
                            if (m.datasets[d].modality != mod) continue;
                            auto& slot = m.datasets[d].localization.empty() ? wildcard : exact;
                            if (m.datasets[d].localization.empty() || m.datasets[d].localization == loc) {
                                if (slot)
                                    throw ValidationError("manifest: several datasets match " + std::string(to_string(mod)) +
                                                          (loc.empty() ? "" : " / " + loc));
                                slot = d;
                            }
                        }
                        const auto pick = exact ? exact : wildcard;
                        if (!pick)
                            throw ValidationError("manifest: no dataset for modality " + std::string(to_string(mod)) +
                                                  (loc.empty() ? "" : " and localization '" + loc + "'") +
                                                  " (needed by " + c.config_id + ")");
                        cell.datasets.push_back(*pick);
                    }
                    cells.push_back(std::move(cell));
                }
    return cells;
}

namespace {

constexpr std::string_view kCellFormat = "biomark-cell-1";

std::string config_fingerprint(const cv::RunConfig& c, const std::vector<std::string>& dataset_digests) {
    json j;
    j["format"] = kCellFormat;
    j["config_id"] = c.config_id;
    j["classifier"] = classify::to_string(c.classifier.kind);
    j["metric"] = c.classifier.metric == classify::SelectionMetric::AUC ? "auc" : "acc";
    j["ksvm"] = {c.classifier.ksvm.gammas, c.classifier.ksvm.costs, c.classifier.ksvm.tolerance, c.classifier.ksvm.max_iterations};
    const auto& g = c.classifier.glmnet;
    j["glmnet"] = {g.alpha, g.n_lambda, g.lambda_min_ratio, g.tolerance, g.max_sweeps, g.stop_on_saturation};
    j["correction"] = harmonize::to_string(c.correction);
    json rosters = json::array();
    for (const auto& r : c.rosters)
        rosters.push_back({to_string(r.modality), r.covariates, r.degree, r.categorical_interactions});
    j["rosters"] = rosters;
    j["sensor"] = c.sensor;
    j["localization"] = c.localization;
    j["ffsel"] = c.use_ffsel();
    j["relieff_neighbors"] = c.relieff_neighbors;
    j["K"] = c.k;
    j["R"] = c.replicas;
    j["seed"] = c.master_seed;
    j["data"] = dataset_digests;
    return j.dump();
}

std::string file_digest(const fs::path& p) { return text::hex64(text::fnv1a(text::read_file(p))); }

struct CellFiles {
    fs::path results, coefficients, columns, meta;
};

CellFiles cell_files(const fs::path& out, const std::string& id) {
    const fs::path dir = out / "cells";
    return {dir / (id + ".csv"), dir / (id + ".coef.csv"), dir / (id + ".columns.csv"), dir / (id + ".digest.json")};
}

bool cell_is_current(const CellFiles& f, const std::string& digest, bool glmnet) {
    std::error_code ec;
    if (!fs::exists(f.meta, ec) || !fs::exists(f.results, ec)) return false;
    try {
        const json meta = json::parse(text::read_file(f.meta));
        if (meta.value("digest", "") != digest) return false;
        if (meta.value("results", "") != file_digest(f.results)) return false;
        if (glmnet) {
            if (!fs::exists(f.coefficients, ec) || !fs::exists(f.columns, ec)) return false;
            if (meta.value("coefficients", "") != file_digest(f.coefficients)) return false;
            if (meta.value("columns", "") != file_digest(f.columns)) return false;
        }
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

std::string coefficient_csv(const cv::RunResultSet& set) {
    std::vector<std::string> header{"replica"};
    header.insert(header.end(), set.feature_names.begin(), set.feature_names.end());
    std::string out = text::csv_join(header) + "\n";
    for (const auto& r : set.replicas) {
        // Replica trace: mean over the outer-fold refits.
        const Eigen::VectorXd mean = r.coefficients.rowwise().mean();
        std::vector<std::string> row{std::to_string(r.replica)};
        for (Eigen::Index j = 0; j < mean.size(); ++j) row.push_back(text::format_double(mean(j)));
        out += text::csv_join(row) + "\n";
    }
    return out;
}

std::string columns_csv(const FeatureMatrix& fm) {
    std::string out = "feature,modality,band,region\n";
    for (const auto& c : fm.columns())
        out += text::csv_join({c.qualified(), std::string(to_string(c.modality)), c.band.value_or(""), c.region.value_or("")}) + "\n";
    return out;
}

DatasetBundle load_entry(const DatasetEntry& e, const CovariateSchema& schema) {
    DatasetBundle b = load_dataset(e.paths, schema);
    if (e.paths.sidecar) return b;
    // Without a sidecar every column takes the entry's modality.
    auto cols = b.features().columns();
    for (auto& c : cols) c.modality = e.modality;
    return b.with_features(FeatureMatrix(b.features().ids(), std::move(cols), b.features().values()));
}

}  // namespace

GridOutcome run_experiment_grid(const ExperimentManifest& m, const RunOptions& options) {
    auto log = [&](const std::string& s) {
        if (options.log) options.log(s);
    };
    const auto cells = expand_grid(m);
    const fs::path out = m.output_dir;
    if (out.empty()) throw ValidationError("run_experiment_grid: no output directory");

    // Datasets load once; a load failure fails only the cells that need it.
    std::vector<std::optional<DatasetBundle>> bundles(m.datasets.size());
    std::vector<std::string> load_error(m.datasets.size()), data_digest(m.datasets.size());
    for (std::size_t d = 0; d < m.datasets.size(); ++d) {
        try {
            const auto& p = m.datasets[d].paths;
            data_digest[d] = file_digest(p.features) + file_digest(p.covariates) + file_digest(p.labels) +
                             (p.sidecar ? file_digest(*p.sidecar) : "") + std::string(to_string(m.datasets[d].modality));
            bundles[d] = load_entry(m.datasets[d], m.schema);
        } catch (const std::exception& e) {
            load_error[d] = e.what();
        }
    }

    GridOutcome outcome;
    const std::size_t n_run = options.stop_after ? std::min(*options.stop_after, cells.size()) : cells.size();
    outcome.interrupted = n_run < cells.size();
    std::vector<std::optional<std::string>> failure(cells.size());
    std::vector<char> skipped(cells.size(), 0);
    std::mutex mu;

    parallel_for(n_run, options.jobs, [&](std::size_t i) {
        const auto& cell = cells[i];
        const auto& cfg = cell.config;
        const bool glmnet = cfg.classifier.kind == classify::ClassifierKind::GLMNET;
        const CellFiles f = cell_files(out, cfg.config_id);
        try {
            std::vector<std::string> digests;
            for (auto d : cell.datasets) {
                if (!bundles[d]) throw ValidationError("dataset " + std::to_string(d) + ": " + load_error[d]);
                digests.push_back(data_digest[d]);
            }
            const std::string digest = text::hex64(text::fnv1a(config_fingerprint(cfg, digests)));
            if (cell_is_current(f, digest, glmnet)) {
                skipped[i] = 1;
                std::lock_guard lock(mu);
                log("skip " + cfg.config_id + " (up to date)");
                return;
            }
            std::vector<DatasetBundle> parts;
            for (auto d : cell.datasets) parts.push_back(*bundles[d]);
            const DatasetBundle data = combine_features(parts, cell.mode);
            const cv::RunResultSet set = cv::monte_carlo_run(cfg, data, 1);

            const std::string results = cv::results_to_csv(std::span(&set, 1));
            json meta = {{"digest", digest}, {"config_id", cfg.config_id}};
            text::write_file_atomic(f.results, results);
            meta["results"] = text::hex64(text::fnv1a(results));
            if (glmnet) {
                const std::string coef = coefficient_csv(set);
                const std::string cols = columns_csv(data.features());
                text::write_file_atomic(f.coefficients, coef);
                text::write_file_atomic(f.columns, cols);
                meta["coefficients"] = text::hex64(text::fnv1a(coef));
                meta["columns"] = text::hex64(text::fnv1a(cols));
            }
            // The digest file goes last: its presence marks the cell complete.
            text::write_file_atomic(f.meta, meta.dump(2) + "\n");
            std::lock_guard lock(mu);
            log("done " + cfg.config_id);
        } catch (const std::exception& e) {
            std::lock_guard lock(mu);
            failure[i] = e.what();
            log("FAILED " + cfg.config_id + ": " + e.what());
        }
    });

    for (std::size_t i = 0; i < n_run; ++i) {
        if (failure[i]) outcome.failures.push_back({cells[i].config.config_id, *failure[i]});
        else if (skipped[i]) ++outcome.skipped;
        else ++outcome.computed;
    }
    if (outcome.interrupted) {
        log("stopped after " + std::to_string(n_run) + " of " + std::to_string(cells.size()) + " cells");
        return outcome;
    }

    // Merge successful cells in grid order.
    std::string merged = text::csv_join(cv::kResultColumns) + "\n";
    std::size_t merged_cells = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (failure[i]) continue;
        const std::string body = text::read_file(cell_files(out, cells[i].config.config_id).results);
        merged += body.substr(body.find('\n') + 1);
        ++merged_cells;
    }
    if (merged_cells == 0) return outcome;
    text::write_file_atomic(out / "results.csv", merged);
    outcome.outputs.push_back(out / "results.csv");

    const text::CsvTable table = text::parse_csv(merged, "results.csv");

    // ANOVA per response on the holdout split.
    std::vector<std::string> factors = m.anova_factors;
    if (factors.empty()) {
        for (const std::string f : {"classifier", "sensor", "correction", "localization"}) {
            std::set<std::string> levels;
            const auto col = static_cast<std::size_t>(std::find(table.header.begin(), table.header.end(), f) - table.header.begin());
            for (const auto& r : table.rows) levels.insert(r.cells[col]);
            if (levels.size() >= 2) factors.push_back(f);
        }
    }
    std::string notes = std::string(stats::kReplicaCaveat) + "\n";
    if (factors.empty()) {
        notes += "ANOVA skipped: no grid axis has two or more levels.\n";
    } else {
        try {
            std::vector<stats::ReportRow> rows;
            std::string anova_csv = "response,term,ss,df,f,p_value\n";
            for (const std::string response : {"acc", "sens", "spec", "auc"}) {
                const auto obs = stats::observations_from_table(table, response, factors, "holdout");
                const auto t = stats::nway_anova(obs, m.anova_interactions);
                if (!t.note.empty()) notes += response + ": " + t.note + "\n";
                for (const auto& term : t.terms)
                    anova_csv += text::csv_join({response, term.name, text::format_double(term.ss), text::format_double(term.df),
                                                 text::format_double(term.f), stats::format_p(term.p)}) + "\n";
                anova_csv += text::csv_join({response, "residual", text::format_double(t.ss_residual),
                                             text::format_double(t.df_residual), "", ""}) + "\n";
                std::vector<stats::PairwiseContrast> contrasts;
                for (const auto& f : factors) {
                    auto b = stats::bonferroni_pairwise(obs, f, m.alpha);
                    std::string tukey_note;
                    auto tk = stats::tukey_hsd(obs, f, m.alpha, &tukey_note);
                    if (!tukey_note.empty()) notes += response + " / " + f + ": " + tukey_note + "\n";
                    contrasts.insert(contrasts.end(), b.begin(), b.end());
                    contrasts.insert(contrasts.end(), tk.begin(), tk.end());
                }
                auto r = stats::report_rows(response, t, contrasts);
                rows.insert(rows.end(), r.begin(), r.end());
            }
            text::write_file_atomic(out / "anova_report.csv", stats::report_to_csv(rows));
            text::write_file_atomic(out / "anova_tables.csv", anova_csv);
            outcome.outputs.push_back(out / "anova_report.csv");
            outcome.outputs.push_back(out / "anova_tables.csv");
        } catch (const std::exception& e) {
            outcome.failures.push_back({"anova", e.what()});
            log(std::string("FAILED anova: ") + e.what());
        }
    }
    text::write_file_atomic(out / "anova_notes.txt", notes);
    outcome.outputs.push_back(out / "anova_notes.txt");

    // Coefficient summaries for GLMNET cells.
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& cfg = cells[i].config;
        if (failure[i] || cfg.classifier.kind != classify::ClassifierKind::GLMNET || cfg.replicas < 2) continue;
        const CellFiles f = cell_files(out, cfg.config_id);
        const auto coef = text::read_csv(f.coefficients);
        std::vector<std::string> names(coef.header.begin() + 1, coef.header.end());
        std::vector<Eigen::VectorXd> traces;
        for (const auto& row : coef.rows) {
            Eigen::VectorXd v(static_cast<Eigen::Index>(names.size()));
            for (std::size_t j = 0; j < names.size(); ++j) text::parse_double(row.cells[j + 1], v(static_cast<Eigen::Index>(j)));
            traces.push_back(std::move(v));
        }
        const auto summary = report::aggregate_coefficients(names, traces);
        std::vector<ColumnInfo> columns;
        for (const auto& row : text::read_csv(f.columns).rows) {
            ColumnInfo c;
            const auto slash = row.cells[0].find('/');
            c.name = row.cells[0].substr(slash + 1);
            c.modality = parse_modality(row.cells[1]);
            if (!row.cells[2].empty()) c.band = row.cells[2];
            if (!row.cells[3].empty()) c.region = row.cells[3];
            columns.push_back(std::move(c));
        }
        const fs::path dir = out / "coefficients";
        std::string top = "rank,feature,z,mean,sd,frequency\n";
        std::size_t rank = 0;
        for (auto j : summary.top(20)) {
            const auto k = static_cast<Eigen::Index>(j);
            top += text::csv_join({std::to_string(++rank), summary.features[j], text::format_double(summary.z(k)),
                                   text::format_double(summary.mean(k)), text::format_double(summary.sd(k)),
                                   text::format_double(summary.frequency(k))}) + "\n";
        }
        const std::vector<std::pair<fs::path, std::string>> files = {
            {dir / (cfg.config_id + ".csv"), summary.to_csv()},
            {dir / (cfg.config_id + "_top20.csv"), top},
            {dir / (cfg.config_id + "_region_band.csv"), report::region_band_table(summary, columns)},
            {dir / (cfg.config_id + ".svg"), report::svg_coefficients(cfg.config_id + " coefficients (top 20 by |z|)", summary)}};
        for (const auto& [path, content] : files) {
            text::write_file_atomic(path, content);
            outcome.outputs.push_back(path);
        }
    }

    const auto charts = report::emit_report(table, {report::Format::Csv, report::Format::Json, report::Format::SvgBars}, out / "report");
    outcome.outputs.insert(outcome.outputs.end(), charts.begin(), charts.end());
    return outcome;
}

}  // namespace biomark::experiment
