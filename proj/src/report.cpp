#include "biomark/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "biomark/error.hpp"

namespace biomark::report {

std::vector<std::size_t> CoefficientSummary::top(std::size_t n) const {
    std::vector<std::size_t> idx(features.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(z(static_cast<Eigen::Index>(a))) > std::abs(z(static_cast<Eigen::Index>(b)));
    });
    idx.resize(std::min(n, idx.size()));
    return idx;
}

std::string CoefficientSummary::to_csv() const {
    std::string out = "feature,mean,sd,z,frequency,degenerate_sd\n";
    for (std::size_t j = 0; j < features.size(); ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        out += text::csv_join({features[j], text::format_double(mean(i)), text::format_double(sd(i)),
                               text::format_double(z(i)), text::format_double(frequency(i)),
                               degenerate[j] ? "1" : "0"}) +
               "\n";
    }
    return out;
}

CoefficientSummary aggregate_coefficients(const std::vector<std::string>& features,
                                          const std::vector<Eigen::VectorXd>& traces) {
    if (traces.size() < 2) throw ValidationError("aggregate_coefficients: need at least 2 replicas");
    const auto p = static_cast<Eigen::Index>(features.size());
    for (std::size_t r = 0; r < traces.size(); ++r)
        if (traces[r].size() != p)
            throw ValidationError("aggregate_coefficients: replica " + std::to_string(r + 1) + " has " +
                                  std::to_string(traces[r].size()) + " coefficients, expected " + std::to_string(p));
    CoefficientSummary s;
    s.features = features;
    s.mean = Eigen::VectorXd::Zero(p);
    s.sd = Eigen::VectorXd::Zero(p);
    s.z = Eigen::VectorXd::Zero(p);
    s.frequency = Eigen::VectorXd::Zero(p);
    s.degenerate.assign(features.size(), 0);
    const double n = static_cast<double>(traces.size());
    for (const auto& t : traces) {
        s.mean += t;
        s.frequency += (t.array() != 0.0).cast<double>().matrix();
    }
    s.mean /= n;
    s.frequency /= n;
    for (const auto& t : traces) s.sd += (t - s.mean).cwiseAbs2();
    s.sd = (s.sd / (n - 1.0)).cwiseSqrt();
    for (Eigen::Index j = 0; j < p; ++j) {
        s.degenerate[static_cast<std::size_t>(j)] = s.sd(j) < kSdFloor;
        s.z(j) = s.mean(j) / std::max(s.sd(j), kSdFloor);
    }
    return s;
}

std::string region_band_table(const CoefficientSummary& s, const std::vector<ColumnInfo>& columns) {
    std::map<std::string, const ColumnInfo*> by_name;
    for (const auto& c : columns) by_name[c.qualified()] = &c;
    std::string out = "region,band,feature,z\n";
    for (std::size_t j = 0; j < s.features.size(); ++j) {
        auto it = by_name.find(s.features[j]);
        if (it == by_name.end() || !it->second->region || !it->second->band) continue;
        out += text::csv_join({*it->second->region, *it->second->band, s.features[j],
                               text::format_double(s.z(static_cast<Eigen::Index>(j)))}) +
               "\n";
    }
    return out;
}

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string svg_bars(const std::string& title, const std::vector<Bar>& bars, double y_min, double y_max) {
    if (!(y_max > y_min)) throw ValidationError("svg_bars: empty value range");
    const double bar_w = 16.0, gap = 4.0, group_gap = 14.0, left = 60.0, top = 40.0, plot_h = 260.0, bottom = 150.0;
    double width = left + 20.0;
    for (std::size_t i = 0; i < bars.size(); ++i) width += bar_w + gap + (i > 0 && bars[i].group != bars[i - 1].group ? group_gap : 0.0);
    const double height = top + plot_h + bottom;
    auto ypos = [&](double v) { return top + plot_h * (y_max - std::clamp(v, y_min, y_max)) / (y_max - y_min); };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" + num(height) + "\">\n";
    s += "<text x=\"" + num(left) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" + xml_escape(title) + "</text>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" + num(top + plot_h) + "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = y_min + (y_max - y_min) * t / 4.0;
        s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(ypos(v) + 4) +
             "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" + num(v) + "</text>\n";
    }
    const double base = ypos(std::clamp(0.0, y_min, y_max));
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(base) + "\" x2=\"" + num(width - 10) + "\" y2=\"" + num(base) + "\" stroke=\"black\"/>\n";
    static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
    std::map<std::string, std::size_t> colour;
    double x = left + 10.0;
    for (std::size_t i = 0; i < bars.size(); ++i) {
        const auto& b = bars[i];
        if (i > 0 && b.group != bars[i - 1].group) x += group_gap;
        const std::size_t c = colour.emplace(b.group, colour.size()).first->second;
        const double y = ypos(b.value);
        s += "<rect x=\"" + num(x) + "\" y=\"" + num(std::min(y, base)) + "\" width=\"" + num(bar_w) + "\" height=\"" +
             num(std::abs(base - y)) + "\" fill=\"" + palette[c % 6] + "\"><title>" + xml_escape(b.label) + "</title></rect>\n";
        const double cx = x + bar_w / 2;
        s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(ypos(b.value - b.error)) + "\" x2=\"" + num(cx) + "\" y2=\"" +
             num(ypos(b.value + b.error)) + "\" stroke=\"black\"/>\n";
        s += "<text transform=\"translate(" + num(cx + 3) + "," + num(top + plot_h + 8) +
             ") rotate(60)\" font-family=\"sans-serif\" font-size=\"9\">" + xml_escape(b.label) + "</text>\n";
        x += bar_w + gap;
    }
    s += "</svg>\n";
    return s;
}

std::string svg_coefficients(const std::string& title, const CoefficientSummary& s, std::size_t top_n) {
    std::vector<Bar> bars;
    double lim = 0.0;
    for (auto j : s.top(top_n)) {
        const auto i = static_cast<Eigen::Index>(j);
        bars.push_back({s.features[j], s.mean(i) >= 0 ? "+" : "-", s.mean(i), s.sd(i)});
        lim = std::max(lim, std::abs(s.mean(i)) + s.sd(i));
    }
    if (lim == 0.0) lim = 1.0;
    return svg_bars(title, bars, -lim, lim);
}

Format parse_format(std::string_view s) {
    if (s == "csv") return Format::Csv;
    if (s == "json") return Format::Json;
    if (s == "svg-bars" || s == "svg") return Format::SvgBars;
    throw ValidationError("unknown report format '" + std::string(s) + "' (expected csv, json or svg-bars)");
}

std::vector<std::filesystem::path> emit_report(const text::CsvTable& results, const std::set<Format>& formats,
                                               const std::filesystem::path& out_dir) {
    if (results.rows.empty()) throw ValidationError("emit_report: results table is empty");
    auto col = [&](std::string_view name) {
        auto it = std::find(results.header.begin(), results.header.end(), name);
        if (it == results.header.end()) throw ValidationError("results table has no column '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - results.header.begin());
    };
    const std::vector<std::string> keys = {"config_id", "classifier", "sensor", "correction", "localization", "split"};
    const std::vector<std::string> responses = {"acc", "sens", "spec", "auc"};
    std::vector<std::size_t> kc, rc;
    for (const auto& k : keys) kc.push_back(col(k));
    for (const auto& r : responses) rc.push_back(col(r));

    struct Cell {
        std::vector<std::string> key;
        std::vector<std::vector<double>> values;
    };
    std::vector<Cell> cells;
    std::map<std::vector<std::string>, std::size_t> index;
    for (const auto& row : results.rows) {
        std::vector<std::string> key;
        for (auto c : kc) key.push_back(row.cells[c]);
        auto [it, fresh] = index.emplace(key, cells.size());
        if (fresh) cells.push_back({key, std::vector<std::vector<double>>(responses.size())});
        for (std::size_t r = 0; r < responses.size(); ++r) {
            double v = 0.0;
            if (!text::parse_double(row.cells[rc[r]], v))
                throw ValidationError("results line " + std::to_string(row.line) + ": non-numeric " + responses[r]);
            cells[it->second].values[r].push_back(v);
        }
    }
    auto mean_sd = [](const std::vector<double>& v) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::pair{m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
    };

    std::vector<std::pair<std::filesystem::path, std::string>> files;
    if (formats.count(Format::Csv)) {
        std::vector<std::string> header = keys;
        header.push_back("n");
        for (const auto& r : responses) {
            header.push_back(r + "_mean");
            header.push_back(r + "_sd");
        }
        std::string csv = text::csv_join(header) + "\n";
        for (const auto& c : cells) {
            std::vector<std::string> row = c.key;
            row.push_back(std::to_string(c.values[0].size()));
            for (const auto& v : c.values) {
                const auto [m, sd] = mean_sd(v);
                row.push_back(text::format_double(m));
                row.push_back(text::format_double(sd));
            }
            csv += text::csv_join(row) + "\n";
        }
        files.emplace_back(out_dir / "summary.csv", csv);
    }
    if (formats.count(Format::Json)) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : cells) {
            nlohmann::json j;
            for (std::size_t k = 0; k < keys.size(); ++k) j[keys[k]] = c.key[k];
            j["n"] = c.values[0].size();
            for (std::size_t r = 0; r < responses.size(); ++r) {
                const auto [m, sd] = mean_sd(c.values[r]);
                j[responses[r]] = {{"mean", m}, {"sd", sd}};
            }
            arr.push_back(j);
        }
        files.emplace_back(out_dir / "summary.json", arr.dump(2) + "\n");
    }
    if (formats.count(Format::SvgBars)) {
        std::vector<const Cell*> hold;
        for (const auto& c : cells)
            if (c.key[5] == "holdout") hold.push_back(&c);
        if (hold.empty())
            for (const auto& c : cells) hold.push_back(&c);
        std::stable_sort(hold.begin(), hold.end(), [](const Cell* a, const Cell* b) { return a->key[1] < b->key[1]; });
        for (std::size_t r = 0; r < responses.size(); ++r) {
            std::vector<Bar> bars;
            for (const auto* c : hold) {
                const auto [m, sd] = mean_sd(c->values[r]);
                bars.push_back({c->key[0], c->key[1], m, sd});
            }
            files.emplace_back(out_dir / ("bars_" + responses[r] + ".svg"), svg_bars(responses[r] + " (mean +- SD)", bars, 0.0, 1.0));
        }
    }
    std::vector<std::filesystem::path> written;
    for (const auto& [path, content] : files) {
        text::write_file_atomic(path, content);
        written.push_back(path);
    }
    return written;
}

}  // namespace biomark::report
