#include "biomark/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "biomark/error.hpp"
#include "biomark/text.hpp"

namespace biomark {

namespace {

using json = nlohmann::json;

constexpr std::string_view kIdColumn = "participant_id";

std::string row_ref(std::size_t data_row, std::size_t line) {
    return "row " + std::to_string(data_row) + " (line " + std::to_string(line) + ")";
}

std::vector<std::size_t> sorted_order(const std::vector<std::string>& ids) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    return order;
}

void require_unique_ids(const std::vector<std::string>& ids, const std::string& where) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
        if (id.empty()) throw ValidationError(where + ": empty participant ID");
        if (!seen.insert(id).second) throw ValidationError(where + ": duplicate participant ID '" + id + "'");
    }
}

void check_header(const text::CsvTable& t, const std::string& source) {
    if (t.header.empty()) throw ValidationError(source + ": missing header row");
    if (t.header[0] != kIdColumn)
        throw ValidationError(source + ": first header column must be 'participant_id', got '" + t.header[0] + "'");
}

void check_width(const text::CsvTable& t, const text::CsvRow& row, std::size_t data_row, const std::string& source) {
    if (row.cells.size() != t.header.size())
        throw ValidationError(source + ": " + row_ref(data_row, row.line) + " has " + std::to_string(row.cells.size()) +
                              " cells, header has " + std::to_string(t.header.size()));
}

}  // namespace

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::MAG: return "MAG";
        case Modality::GRAD: return "GRAD";
        case Modality::MRI: return "MRI";
        case Modality::OTHER: return "OTHER";
    }
    return "OTHER";
}

Modality parse_modality(std::string_view s) {
    if (s == "MAG") return Modality::MAG;
    if (s == "GRAD") return Modality::GRAD;
    if (s == "MRI") return Modality::MRI;
    if (s == "OTHER") return Modality::OTHER;
    throw ValidationError("unknown modality '" + std::string(s) + "' (expected MAG, GRAD, MRI or OTHER)");
}

std::string ColumnInfo::qualified() const { return std::string(to_string(modality)) + "/" + name; }

// ---------------------------------------------------------------------------
// FeatureMatrix

FeatureMatrix::FeatureMatrix(std::vector<std::string> ids, std::vector<ColumnInfo> columns, Eigen::MatrixXd values)
    : ids_(std::move(ids)), columns_(std::move(columns)), values_(std::move(values)) {
    if (static_cast<std::size_t>(values_.rows()) != ids_.size() ||
        static_cast<std::size_t>(values_.cols()) != columns_.size())
        throw ValidationError("feature matrix shape does not match its row/column labels");
    require_unique_ids(ids_, "feature matrix");
    std::unordered_set<std::string> names;
    for (const auto& c : columns_) {
        if (c.name.empty()) throw ValidationError("feature matrix: empty column name");
        if (!names.insert(c.qualified()).second)
            throw ValidationError("duplicate column name '" + c.qualified() + "'");
    }
    for (Eigen::Index j = 0; j < values_.cols(); ++j)
        for (Eigen::Index i = 0; i < values_.rows(); ++i)
            if (!std::isfinite(values_(i, j)))
                throw ValidationError("non-finite value at participant '" + ids_[static_cast<std::size_t>(i)] +
                                      "', column '" + columns_[static_cast<std::size_t>(j)].name + "'");
}

std::optional<std::size_t> FeatureMatrix::find_column(std::string_view name) const {
    std::optional<std::size_t> bare;
    bool ambiguous = false;
    for (std::size_t j = 0; j < columns_.size(); ++j) {
        if (columns_[j].qualified() == name) return j;
        if (columns_[j].name == name) {
            if (bare) ambiguous = true;
            bare = j;
        }
    }
    if (ambiguous) return std::nullopt;
    return bare;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> idx) const {
    std::vector<ColumnInfo> cols;
    cols.reserve(idx.size());
    Eigen::MatrixXd v(values_.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        cols.push_back(columns_.at(idx[k]));
        v.col(static_cast<Eigen::Index>(k)) = values_.col(static_cast<Eigen::Index>(idx[k]));
    }
    FeatureMatrix out;
    out.ids_ = ids_;
    out.columns_ = std::move(cols);
    out.values_ = std::move(v);
    return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> idx) const {
    std::vector<std::string> ids;
    ids.reserve(idx.size());
    Eigen::MatrixXd v(static_cast<Eigen::Index>(idx.size()), values_.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        ids.push_back(ids_.at(idx[k]));
        v.row(static_cast<Eigen::Index>(k)) = values_.row(static_cast<Eigen::Index>(idx[k]));
    }
    FeatureMatrix out;
    out.ids_ = std::move(ids);
    out.columns_ = columns_;
    out.values_ = std::move(v);
    return out;
}

FeatureMatrix FeatureMatrix::with_values(Eigen::MatrixXd values) const {
    return FeatureMatrix(ids_, columns_, std::move(values));
}

// ---------------------------------------------------------------------------
// Covariates and labels

CovariateKind covariate_kind(std::string_view name) {
    if (name == "sex" || name == "site") return CovariateKind::Categorical;
    return CovariateKind::Continuous;
}

bool is_known_covariate(std::string_view name) {
    return name == "age" || name == "sex" || name == "site" || name == "tiv" || name == "movement";
}

CovariateTable::CovariateTable(std::vector<std::string> ids, std::vector<CovariateColumn> columns)
    : ids_(std::move(ids)), columns_(std::move(columns)) {
    require_unique_ids(ids_, "covariate table");
    std::set<std::string, std::less<>> names;
    for (const auto& c : columns_) {
        if (!names.insert(c.name).second) throw ValidationError("duplicate covariate column '" + c.name + "'");
        const std::size_t n = c.kind == CovariateKind::Continuous ? c.numeric.size() : c.level.size();
        if (n != ids_.size()) throw ValidationError("covariate column '" + c.name + "' has wrong length");
    }
}

const CovariateColumn* CovariateTable::find(std::string_view name) const {
    for (const auto& c : columns_)
        if (c.name == name) return &c;
    return nullptr;
}

CovariateTable CovariateTable::select_rows(std::span<const std::size_t> idx) const {
    std::vector<std::string> ids;
    for (auto i : idx) ids.push_back(ids_.at(i));
    std::vector<CovariateColumn> cols;
    for (const auto& c : columns_) {
        CovariateColumn s{c.name, c.kind, {}, {}};
        for (auto i : idx) {
            if (c.kind == CovariateKind::Continuous)
                s.numeric.push_back(c.numeric.at(i));
            else
                s.level.push_back(c.level.at(i));
        }
        cols.push_back(std::move(s));
    }
    CovariateTable out;
    out.ids_ = std::move(ids);
    out.columns_ = std::move(cols);
    return out;
}

std::size_t LabelVector::count(int cls) const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), cls));
}

LabelVector LabelVector::select_rows(std::span<const std::size_t> idx) const {
    LabelVector out;
    for (auto i : idx) {
        out.ids.push_back(ids.at(i));
        out.values.push_back(values.at(i));
    }
    return out;
}

DatasetBundle::DatasetBundle(FeatureMatrix features, CovariateTable covariates, LabelVector labels)
    : features_(std::move(features)), covariates_(std::move(covariates)), labels_(std::move(labels)) {
    if (covariates_.ids() != features_.ids())
        throw ValidationError("dataset bundle: covariate participant list differs from feature participant list");
    if (labels_.ids != features_.ids())
        throw ValidationError("dataset bundle: label participant list differs from feature participant list");
    if (labels_.values.size() != labels_.ids.size()) throw ValidationError("dataset bundle: label vector length mismatch");
    for (int v : labels_.values)
        if (v != 0 && v != 1) throw ValidationError("dataset bundle: labels must be 0 or 1");
}

DatasetBundle DatasetBundle::select_rows(std::span<const std::size_t> idx) const {
    DatasetBundle out;
    out.features_ = features_.select_rows(idx);
    out.covariates_ = covariates_.select_rows(idx);
    out.labels_ = labels_.select_rows(idx);
    return out;
}

DatasetBundle DatasetBundle::with_features(FeatureMatrix features) const {
    return DatasetBundle(std::move(features), covariates_, labels_);
}

// ---------------------------------------------------------------------------
// Loading

FeatureMatrix load_features(const std::filesystem::path& path, const std::optional<std::filesystem::path>& sidecar) {
    const std::string source = path.string();
    const auto t = text::read_csv(path);
    if (t.header.empty()) throw ValidationError(source + ": no feature columns");
    check_header(t, source);
    if (t.header.size() < 2) throw ValidationError(source + ": no feature columns");

    std::vector<ColumnInfo> cols;
    std::unordered_map<std::string, std::size_t> by_name;
    for (std::size_t j = 1; j < t.header.size(); ++j) {
        const auto& name = t.header[j];
        if (name.empty()) throw ValidationError(source + ": empty column name at header position " + std::to_string(j + 1));
        if (!by_name.emplace(name, j - 1).second) throw ValidationError(source + ": duplicate column name '" + name + "'");
        cols.push_back({name, Modality::OTHER, std::nullopt, std::nullopt});
    }

    if (sidecar) {
        json meta;
        try {
            meta = json::parse(text::read_file(*sidecar));
        } catch (const json::exception& e) {
            throw ValidationError(sidecar->string() + ": invalid JSON: " + e.what());
        }
        Modality fallback = Modality::OTHER;
        if (meta.contains("modality")) fallback = parse_modality(meta.at("modality").get<std::string>());
        for (auto& c : cols) c.modality = fallback;
        if (meta.contains("columns")) {
            for (const auto& [name, entry] : meta.at("columns").items()) {
                auto it = by_name.find(name);
                if (it == by_name.end())
                    throw ValidationError(sidecar->string() + ": column '" + name + "' not present in " + source);
                auto& c = cols[it->second];
                if (entry.contains("modality")) c.modality = parse_modality(entry.at("modality").get<std::string>());
                if (entry.contains("band") && !entry.at("band").is_null()) c.band = entry.at("band").get<std::string>();
                if (entry.contains("region") && !entry.at("region").is_null())
                    c.region = entry.at("region").get<std::string>();
            }
        }
    }

    std::vector<std::string> ids;
    Eigen::MatrixXd values(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        check_width(t, row, r + 1, source);
        ids.push_back(row.cells[0]);
        for (std::size_t j = 1; j < row.cells.size(); ++j) {
            double v = 0.0;
            if (!text::parse_double(row.cells[j], v) || !std::isfinite(v))
                throw ValidationError(source + ": " + row_ref(r + 1, row.line) + ", column '" + t.header[j] +
                                      "': non-numeric or non-finite value '" + row.cells[j] + "'");
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j - 1)) = v;
        }
    }
    require_unique_ids(ids, source);
    return FeatureMatrix(std::move(ids), std::move(cols), std::move(values));
}

namespace {

CovariateTable load_covariates(const std::filesystem::path& path, const CovariateSchema& schema) {
    const std::string source = path.string();
    const auto t = text::read_csv(path);
    check_header(t, source);
    std::vector<CovariateColumn> cols;
    for (std::size_t j = 1; j < t.header.size(); ++j) {
        const auto& name = t.header[j];
        if (!is_known_covariate(name))
            throw ValidationError(source + ": unknown covariate column '" + name +
                                  "' (expected age, sex, site, tiv, movement)");
        cols.push_back({name, covariate_kind(name), {}, {}});
    }
    std::vector<std::string> ids;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        check_width(t, row, r + 1, source);
        ids.push_back(row.cells[0]);
        for (std::size_t j = 1; j < row.cells.size(); ++j) {
            auto& col = cols[j - 1];
            const std::string& cell = row.cells[j];
            if (col.kind == CovariateKind::Continuous) {
                if (cell.empty()) {
                    col.numeric.emplace_back(std::nullopt);
                    continue;
                }
                double v = 0.0;
                if (!text::parse_double(cell, v) || !std::isfinite(v))
                    throw ValidationError(source + ": " + row_ref(r + 1, row.line) + ", column '" + col.name +
                                          "': non-numeric value '" + cell + "'");
                col.numeric.emplace_back(v);
            } else {
                if (cell.empty()) {
                    col.level.emplace_back(std::nullopt);
                    continue;
                }
                if (auto it = schema.levels.find(col.name); it != schema.levels.end()) {
                    if (std::find(it->second.begin(), it->second.end(), cell) == it->second.end())
                        throw ValidationError(source + ": " + row_ref(r + 1, row.line) + ", column '" + col.name +
                                              "': unknown categorical level '" + cell + "'");
                }
                col.level.emplace_back(cell);
            }
        }
    }
    require_unique_ids(ids, source);
    return CovariateTable(std::move(ids), std::move(cols));
}

LabelVector load_labels(const std::filesystem::path& path) {
    const std::string source = path.string();
    const auto t = text::read_csv(path);
    check_header(t, source);
    if (t.header.size() != 2 || t.header[1] != "label")
        throw ValidationError(source + ": expected header 'participant_id,label'");
    LabelVector out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        check_width(t, row, r + 1, source);
        if (row.cells[1] != "0" && row.cells[1] != "1")
            throw ValidationError(source + ": " + row_ref(r + 1, row.line) + ", column 'label': expected 0 or 1, got '" +
                                  row.cells[1] + "'");
        out.ids.push_back(row.cells[0]);
        out.values.push_back(row.cells[1] == "1" ? 1 : 0);
    }
    require_unique_ids(out.ids, source);
    return out;
}

void require_same_id_set(const std::vector<std::string>& reference, const std::vector<std::string>& other,
                         const std::string& ref_name, const std::string& other_name) {
    std::unordered_set<std::string> a(reference.begin(), reference.end());
    std::unordered_set<std::string> b(other.begin(), other.end());
    for (const auto& id : reference)
        if (!b.count(id)) throw ValidationError("participant '" + id + "' in " + ref_name + " is missing from " + other_name);
    for (const auto& id : other)
        if (!a.count(id)) throw ValidationError("participant '" + id + "' in " + other_name + " is missing from " + ref_name);
}

std::vector<std::size_t> reorder_to(const std::vector<std::string>& ids, const std::vector<std::string>& target) {
    std::unordered_map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
    std::vector<std::size_t> idx;
    idx.reserve(target.size());
    for (const auto& id : target) idx.push_back(pos.at(id));
    return idx;
}

}  // namespace

DatasetBundle load_dataset(const DatasetPaths& paths, const CovariateSchema& schema) {
    FeatureMatrix features = load_features(paths.features, paths.sidecar);
    CovariateTable covariates = load_covariates(paths.covariates, schema);
    LabelVector labels = load_labels(paths.labels);

    require_same_id_set(features.ids(), covariates.ids(), paths.features.string(), paths.covariates.string());
    require_same_id_set(features.ids(), labels.ids, paths.features.string(), paths.labels.string());

    const auto order = sorted_order(features.ids());
    features = features.select_rows(order);
    const auto& canonical = features.ids();
    const auto cov_idx = reorder_to(covariates.ids(), canonical);
    const auto lab_idx = reorder_to(labels.ids, canonical);
    return DatasetBundle(std::move(features), covariates.select_rows(cov_idx), labels.select_rows(lab_idx));
}

// ---------------------------------------------------------------------------
// Saving

std::string features_to_csv(const FeatureMatrix& fm) {
    std::string out;
    std::vector<std::string> header{std::string(kIdColumn)};
    for (const auto& c : fm.columns()) header.push_back(c.name);
    out += text::csv_join(header) + "\n";
    for (std::size_t i = 0; i < fm.rows(); ++i) {
        std::vector<std::string> cells{fm.ids()[i]};
        for (std::size_t j = 0; j < fm.cols(); ++j)
            cells.push_back(text::format_double(fm.values()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
        out += text::csv_join(cells) + "\n";
    }
    return out;
}

std::string covariates_to_csv(const CovariateTable& ct) {
    std::vector<std::string> header{std::string(kIdColumn)};
    for (const auto& c : ct.columns()) header.push_back(c.name);
    std::string out = text::csv_join(header) + "\n";
    for (std::size_t i = 0; i < ct.rows(); ++i) {
        std::vector<std::string> cells{ct.ids()[i]};
        for (const auto& c : ct.columns()) {
            if (c.kind == CovariateKind::Continuous)
                cells.push_back(c.numeric[i] ? text::format_double(*c.numeric[i]) : "");
            else
                cells.push_back(c.level[i].value_or(""));
        }
        out += text::csv_join(cells) + "\n";
    }
    return out;
}

std::string labels_to_csv(const LabelVector& lv) {
    std::string out = "participant_id,label\n";
    for (std::size_t i = 0; i < lv.ids.size(); ++i) out += text::csv_escape(lv.ids[i]) + "," + std::to_string(lv.values[i]) + "\n";
    return out;
}

std::string sidecar_to_json(const FeatureMatrix& fm) {
    json cols = json::object();
    for (const auto& c : fm.columns()) {
        json e = {{"modality", std::string(to_string(c.modality))}};
        if (c.band) e["band"] = *c.band;
        if (c.region) e["region"] = *c.region;
        cols[c.name] = e;
    }
    return json{{"columns", cols}}.dump(2) + "\n";
}

void save_dataset(const DatasetBundle& bundle, const DatasetPaths& paths) {
    std::unordered_set<std::string> bare;
    for (const auto& c : bundle.features().columns())
        if (!bare.insert(c.name).second)
            throw ValidationError("cannot save: bare column name '" + c.name +
                                  "' is shared by several modalities; save each modality separately");
    text::write_file_atomic(paths.features, features_to_csv(bundle.features()));
    text::write_file_atomic(paths.covariates, covariates_to_csv(bundle.covariates()));
    text::write_file_atomic(paths.labels, labels_to_csv(bundle.labels()));
    if (paths.sidecar) text::write_file_atomic(*paths.sidecar, sidecar_to_json(bundle.features()));
}

// ---------------------------------------------------------------------------
// Combination

std::string_view to_string(CombineMode m) {
    switch (m) {
        case CombineMode::MAG_ONLY: return "MAG_ONLY";
        case CombineMode::GRAD_ONLY: return "GRAD_ONLY";
        case CombineMode::MRI_ONLY: return "MRI_ONLY";
        case CombineMode::MAG_MRI: return "MAG+MRI";
        case CombineMode::GRAD_MRI: return "GRAD+MRI";
        case CombineMode::MAG_GRAD_MRI: return "MAG+GRAD+MRI";
    }
    return "MAG_ONLY";
}

CombineMode parse_combine_mode(std::string_view s) {
    for (auto m : {CombineMode::MAG_ONLY, CombineMode::GRAD_ONLY, CombineMode::MRI_ONLY, CombineMode::MAG_MRI,
                   CombineMode::GRAD_MRI, CombineMode::MAG_GRAD_MRI})
        if (to_string(m) == s) return m;
    throw ValidationError("unknown combination mode '" + std::string(s) + "'");
}

std::vector<Modality> modalities_of(CombineMode m) {
    switch (m) {
        case CombineMode::MAG_ONLY: return {Modality::MAG};
        case CombineMode::GRAD_ONLY: return {Modality::GRAD};
        case CombineMode::MRI_ONLY: return {Modality::MRI};
        case CombineMode::MAG_MRI: return {Modality::MAG, Modality::MRI};
        case CombineMode::GRAD_MRI: return {Modality::GRAD, Modality::MRI};
        case CombineMode::MAG_GRAD_MRI: return {Modality::MAG, Modality::GRAD, Modality::MRI};
    }
    return {};
}

namespace {

CovariateTable merge_covariates(std::span<const DatasetBundle> bundles) {
    const auto& ids = bundles.front().covariates().ids();
    std::vector<CovariateColumn> merged;
    for (const auto& b : bundles) {
        for (const auto& col : b.covariates().columns()) {
            auto it = std::find_if(merged.begin(), merged.end(), [&](const auto& m) { return m.name == col.name; });
            if (it == merged.end()) {
                merged.push_back(col);
                continue;
            }
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (col.kind == CovariateKind::Continuous) {
                    auto& dst = it->numeric[i];
                    const auto& src = col.numeric[i];
                    if (dst && src && *dst != *src)
                        throw ValidationError("covariate '" + col.name + "' disagrees across bundles for participant '" +
                                              ids[i] + "'");
                    if (!dst) dst = src;
                } else {
                    auto& dst = it->level[i];
                    const auto& src = col.level[i];
                    if (dst && src && *dst != *src)
                        throw ValidationError("covariate '" + col.name + "' disagrees across bundles for participant '" +
                                              ids[i] + "'");
                    if (!dst) dst = src;
                }
            }
        }
    }
    return CovariateTable(ids, std::move(merged));
}

}  // namespace

DatasetBundle combine_features(std::span<const DatasetBundle> bundles, CombineMode mode) {
    if (bundles.empty()) throw ValidationError("combine_features: no bundles given");
    const auto& ref = bundles.front();
    for (std::size_t b = 1; b < bundles.size(); ++b) {
        if (bundles[b].features().ids() != ref.features().ids())
            throw ValidationError("combine_features: participant list of bundle " + std::to_string(b) +
                                  " differs from bundle 0");
        if (bundles[b].labels().values != ref.labels().values)
            throw ValidationError("combine_features: labels of bundle " + std::to_string(b) + " differ from bundle 0");
    }

    std::vector<ColumnInfo> cols;
    std::vector<std::pair<std::size_t, std::size_t>> sources;  // (bundle, column)
    for (Modality m : modalities_of(mode)) {
        std::size_t found = 0;
        for (std::size_t b = 0; b < bundles.size(); ++b) {
            const auto& fc = bundles[b].features().columns();
            for (std::size_t j = 0; j < fc.size(); ++j) {
                if (fc[j].modality != m) continue;
                cols.push_back(fc[j]);
                sources.emplace_back(b, j);
                ++found;
            }
        }
        if (found == 0)
            throw ValidationError("combine_features: mode " + std::string(to_string(mode)) + " needs " +
                                  std::string(to_string(m)) + " columns but no bundle provides any");
    }

    Eigen::MatrixXd v(static_cast<Eigen::Index>(ref.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < sources.size(); ++k)
        v.col(static_cast<Eigen::Index>(k)) =
            bundles[sources[k].first].features().values().col(static_cast<Eigen::Index>(sources[k].second));

    // FeatureMatrix rejects collisions among qualified names.
    FeatureMatrix fm(ref.features().ids(), std::move(cols), std::move(v));
    return DatasetBundle(std::move(fm), merge_covariates(bundles), ref.labels());
}

DatasetBundle project_modality(const DatasetBundle& bundle, Modality modality) {
    std::vector<std::size_t> idx;
    const auto& cols = bundle.features().columns();
    for (std::size_t j = 0; j < cols.size(); ++j)
        if (cols[j].modality == modality) idx.push_back(j);
    return bundle.with_features(bundle.features().select_columns(idx));
}

}  // namespace biomark
