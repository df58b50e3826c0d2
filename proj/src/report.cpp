#include "buzz/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "buzz/errors.hpp"

namespace buzz {

using nlohmann::json;

namespace {

json eval_to_json(const EvalResult& r) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"rmse", num(r.rmse)},   {"mae", num(r.mae)},
            {"src", num(r.src)},     {"src_degenerate", r.src_degenerate},
            {"n", r.n},              {"failures", r.failures}};
}

EvalResult eval_from_json(const json& j) {
    auto num = [&](const char* key) {
        return j.at(key).is_number() ? j.at(key).get<double>()
                                     : std::numeric_limits<double>::quiet_NaN();
    };
    EvalResult r;
    r.rmse = num("rmse");
    r.mae = num("mae");
    r.src = num("src");
    r.src_degenerate = j.value("src_degenerate", false);
    r.n = j.value("n", 0);
    r.failures = j.value("failures", 0);
    return r;
}

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

std::string metric_cell(double value, const std::optional<double>& improvement_pct) {
    if (!std::isfinite(value)) return "n/a";
    std::string cell = fmt("%.3f", value);
    if (improvement_pct) cell += " (" + fmt("%.2f", *improvement_pct) + "%)";
    return cell;
}

// Table 1 style emphasis: best value per metric column within a group is
// bolded, the runner-up is italicized.
enum class Rank { None, Best, Second };

std::vector<Rank> rank_column(const std::vector<double>& values, bool lower_better) {
    std::vector<Rank> ranks(values.size(), Rank::None);
    int best = -1, second = -1;
    for (size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) continue;
        auto better = [&](double a, double b) { return lower_better ? a < b : a > b; };
        if (best < 0 || better(values[i], values[static_cast<size_t>(best)])) {
            second = best;
            best = static_cast<int>(i);
        } else if (second < 0 || better(values[i], values[static_cast<size_t>(second)])) {
            second = static_cast<int>(i);
        }
    }
    if (best >= 0) ranks[static_cast<size_t>(best)] = Rank::Best;
    if (second >= 0) ranks[static_cast<size_t>(second)] = Rank::Second;
    return ranks;
}

std::string emphasize(std::string cell, Rank rank, size_t group_size) {
    if (group_size < 2 || cell == "n/a") return cell;
    if (rank == Rank::Best) return "**" + cell + "**";
    if (rank == Rank::Second) return "_" + cell + "_";
    return cell;
}

}  // namespace

json report_to_json(const EvalReport& report) {
    json rows = json::array();
    for (const auto& row : report.rows) {
        json r{{"group", row.group},
               {"variant", row.variant},
               {"encoder_id", row.encoder_id},
               {"result", eval_to_json(row.result)}};
        if (row.improvements) {
            r["improvements"] = {{"rmse_pct", row.improvements->rmse_pct},
                                 {"mae_pct", row.improvements->mae_pct},
                                 {"src_pct", row.improvements->src_pct}};
        }
        rows.push_back(std::move(r));
    }
    json hourly = json::array();
    for (const auto& h : report.hourly)
        hourly.push_back({{"hour", h.hour},
                          {"post_count", h.post_count},
                          {"mean_log_view", h.mean_log_view}});
    json dossiers = json::array();
    for (const auto& d : report.dossiers) {
        json dims = json::array();
        for (const auto& dim : d.rationale.per_dimension)
            dims.push_back({{"dimension", dimension_label(dim.dimension)},
                            {"prediction", dim.prediction},
                            {"explanation", dim.explanation}});
        dossiers.push_back({{"id", d.id},
                            {"text", d.text},
                            {"posting_time", format_iso8601(d.posting_time)},
                            {"actual", d.actual},
                            {"predicted", d.predicted},
                            {"rationale",
                             {{"raw_text", d.rationale.raw_text},
                              {"parse_status", parse_status_name(d.rationale.status)},
                              {"summary", d.rationale.summary},
                              {"per_dimension", dims}}}});
    }
    return {{"format", "buzz-report-v1"},
            {"config_digest", report.config_digest},
            {"rows", rows},
            {"parse_status_counts", report.parse_status_counts},
            {"hourly", hourly},
            {"dossiers", dossiers},
            {"notes", report.notes}};
}

EvalReport report_from_json(const json& j) {
    if (j.value("format", "") != "buzz-report-v1")
        throw DataError("unsupported report format");
    EvalReport report;
    report.config_digest = j.value("config_digest", "");
    for (const auto& r : j.at("rows")) {
        ReportRow row;
        row.group = r.at("group").get<std::string>();
        row.variant = r.at("variant").get<std::string>();
        row.encoder_id = r.value("encoder_id", "");
        row.result = eval_from_json(r.at("result"));
        if (r.contains("improvements")) {
            Improvements imp;
            imp.rmse_pct = r["improvements"].value("rmse_pct", 0.0);
            imp.mae_pct = r["improvements"].value("mae_pct", 0.0);
            imp.src_pct = r["improvements"].value("src_pct", 0.0);
            row.improvements = imp;
        }
        report.rows.push_back(std::move(row));
    }
    if (j.contains("parse_status_counts"))
        report.parse_status_counts =
            j["parse_status_counts"].get<std::map<std::string, long>>();
    for (const auto& h : j.value("hourly", json::array())) {
        report.hourly.push_back({h.at("hour").get<int>(), h.at("post_count").get<long>(),
                                 h.at("mean_log_view").get<double>()});
    }
    for (const auto& d : j.value("dossiers", json::array())) {
        DossierEntry e;
        e.id = d.at("id").get<std::string>();
        e.text = d.at("text").get<std::string>();
        auto ts = parse_iso8601(d.at("posting_time").get<std::string>());
        e.posting_time = ts ? *ts : 0;
        e.actual = d.at("actual").get<double>();
        e.predicted = d.at("predicted").get<double>();
        const auto& rat = d.at("rationale");
        e.rationale.raw_text = rat.value("raw_text", "");
        e.rationale.summary = rat.value("summary", "");
        const std::string status = rat.value("parse_status", "failed");
        e.rationale.status = status == "ok" ? ParseStatus::Ok
                                            : (status == "partial" ? ParseStatus::Partial
                                                                   : ParseStatus::Failed);
        for (const auto& dim : rat.value("per_dimension", json::array())) {
            for (Dimension dd : kAllDimensions) {
                if (dim.at("dimension").get<std::string>() == dimension_label(dd))
                    e.rationale.per_dimension.push_back(
                        {dd, dim.at("prediction").get<std::string>(),
                         dim.at("explanation").get<std::string>()});
            }
        }
        report.dossiers.push_back(std::move(e));
    }
    report.notes = j.value("notes", std::vector<std::string>{});
    return report;
}

std::string render_markdown(const EvalReport& report) {
    std::ostringstream out;
    out << "# Hashtag popularity prediction report\n\n";
    out << "Config digest: `" << report.config_digest << "`\n\n";

    // stable group order: first appearance in rows
    std::vector<std::string> groups;
    for (const auto& row : report.rows) {
        if (std::find(groups.begin(), groups.end(), row.group) == groups.end())
            groups.push_back(row.group);
    }

    for (const auto& group : groups) {
        std::vector<const ReportRow*> rows;
        for (const auto& row : report.rows)
            if (row.group == group) rows.push_back(&row);

        out << "## " << group << "\n\n";
        bool multi_encoder = false;
        for (const auto* r : rows)
            if (r->encoder_id != rows.front()->encoder_id) multi_encoder = true;

        out << "| Variant |" << (multi_encoder ? " Encoder |" : "")
            << " RMSE | MAE | SRC | n | failures |\n";
        out << "|---|" << (multi_encoder ? "---|" : "") << "---|---|---|---|---|\n";

        std::vector<double> rmse_col, mae_col, src_col;
        for (const auto* r : rows) {
            rmse_col.push_back(r->result.rmse);
            mae_col.push_back(r->result.mae);
            src_col.push_back(r->result.src);
        }
        auto rmse_rank = rank_column(rmse_col, true);
        auto mae_rank = rank_column(mae_col, true);
        auto src_rank = rank_column(src_col, false);

        for (size_t i = 0; i < rows.size(); ++i) {
            const ReportRow& r = *rows[i];
            std::optional<double> rmse_imp, mae_imp, src_imp;
            if (r.improvements) {
                rmse_imp = r.improvements->rmse_pct;
                mae_imp = r.improvements->mae_pct;
                src_imp = r.improvements->src_pct;
            }
            out << "| " << r.variant << " |";
            if (multi_encoder) out << " " << r.encoder_id << " |";
            out << " " << emphasize(metric_cell(r.result.rmse, rmse_imp), rmse_rank[i], rows.size())
                << " |";
            out << " " << emphasize(metric_cell(r.result.mae, mae_imp), mae_rank[i], rows.size())
                << " |";
            std::string src_cell = metric_cell(r.result.src, src_imp);
            if (r.result.src_degenerate && std::isfinite(r.result.src)) src_cell += " (degenerate)";
            out << " " << emphasize(src_cell, src_rank[i], rows.size()) << " |";
            out << " " << r.result.n << " | " << r.result.failures << " |\n";
        }
        out << "\n";
    }

    if (!report.parse_status_counts.empty()) {
        out << "## Rationale parse status\n\n";
        for (const auto& [key, count] : report.parse_status_counts)
            out << "- " << key << ": " << count << "\n";
        out << "\n";
    }
    if (!report.notes.empty()) {
        out << "## Notes\n\n";
        for (const auto& note : report.notes) out << "- " << note << "\n";
        out << "\n";
    }
    return out.str();
}

std::string render_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "group,variant,encoder,metric,value,improvement_pct,n,failures\n";
    for (const auto& row : report.rows) {
        struct M {
            const char* name;
            double value;
            std::optional<double> imp;
        };
        std::vector<M> metrics{
            {"rmse", row.result.rmse,
             row.improvements ? std::optional<double>(row.improvements->rmse_pct) : std::nullopt},
            {"mae", row.result.mae,
             row.improvements ? std::optional<double>(row.improvements->mae_pct) : std::nullopt},
            {"src", row.result.src,
             row.improvements ? std::optional<double>(row.improvements->src_pct) : std::nullopt}};
        for (const auto& m : metrics) {
            out << row.group << "," << row.variant << "," << row.encoder_id << "," << m.name << ",";
            out << (std::isfinite(m.value) ? fmt("%.6f", m.value) : "") << ",";
            out << (m.imp ? fmt("%.4f", *m.imp) : "") << ",";
            out << row.result.n << "," << row.result.failures << "\n";
        }
    }
    return out.str();
}

std::string render_plot_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "hour,post_count,mean_log_view\n";
    for (const auto& h : report.hourly) {
        out << h.hour << "," << h.post_count << ",";
        if (h.post_count > 0) out << fmt("%.6f", h.mean_log_view);
        out << "\n";
    }
    return out.str();
}

std::string render_dossier(const DossierEntry& entry) {
    std::ostringstream out;
    out << "# " << entry.id << "\n\n";
    out << "- hashtag: " << entry.text << "\n";
    out << "- posted: " << render_time_line(entry.posting_time) << "\n";
    out << "- actual log-views: " << fmt("%.4f", entry.actual) << "\n";
    out << "- predicted log-views: " << fmt("%.4f", entry.predicted) << "\n\n";
    if (entry.rationale.status == ParseStatus::Failed) {
        out << "**Warning: rationale did not parse; raw output below.**\n\n";
        out << "```\n" << entry.rationale.raw_text << "\n```\n";
        return out.str();
    }
    if (entry.rationale.status == ParseStatus::Partial)
        out << "_Rationale parsed partially; missing blocks are omitted._\n\n";
    for (const auto& dim : entry.rationale.per_dimension) {
        out << "## " << dimension_label(dim.dimension) << "\n\n";
        out << "- prediction: " << dim.prediction << "\n";
        out << "- explanation: " << dim.explanation << "\n\n";
    }
    if (!entry.rationale.summary.empty()) out << "## Summary\n\n" << entry.rationale.summary << "\n";
    return out.str();
}

void emit_report(const EvalReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (report.rows.empty()) throw DataError("refusing to emit an empty report");

    auto write = [&](const fs::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write report file: " + path.string());
        out << content;
    };
    write(fs::path(out_dir) / "report.md", render_markdown(report));
    write(fs::path(out_dir) / "report.csv", render_csv(report));
    write(fs::path(out_dir) / "plot_hourly.csv", render_plot_csv(report));
    if (!report.dossiers.empty()) {
        fs::create_directories(fs::path(out_dir) / "dossiers", ec);
        for (const auto& d : report.dossiers)
            write(fs::path(out_dir) / "dossiers" / (d.id + ".md"), render_dossier(d));
    }
}

}  // namespace buzz
