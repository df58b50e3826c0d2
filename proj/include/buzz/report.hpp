#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "buzz/metrics.hpp"
#include "buzz/reasoning.hpp"

namespace buzz {

struct Improvements {
    double rmse_pct = 0.0;
    double mae_pct = 0.0;
    double src_pct = 0.0;
};

struct ReportRow {
    std::string group;    // regressor name, or "fewshot_llm"
    std::string variant;  // baseline, full_reasoning, ...
    std::string encoder_id;
    EvalResult result;
    // vs. the same group's baseline row; absent on baseline and few-shot rows
    std::optional<Improvements> improvements;
};

struct HourlyStat {
    int hour = 0;
    long post_count = 0;
    double mean_log_view = 0.0;
};

struct DossierEntry {
    std::string id;
    std::string text;
    UtcSeconds posting_time = 0;
    double actual = 0.0;
    double predicted = 0.0;
    Rationale rationale;
};

// Everything in here is deterministic for a fixed (config, dataset, seed);
// wall-clock timestamps and cache hit rates live in the run_meta.json sidecar
// instead, so rerunning a config reproduces the report byte for byte.
struct EvalReport {
    std::string config_digest;
    std::vector<ReportRow> rows;
    std::map<std::string, long> parse_status_counts;  // "variant:status" -> count
    std::vector<HourlyStat> hourly;                   // posting counts by hour of day
    std::vector<DossierEntry> dossiers;
    std::vector<std::string> notes;
};

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

std::string render_markdown(const EvalReport& report);
std::string render_csv(const EvalReport& report);
std::string render_plot_csv(const EvalReport& report);
std::string render_dossier(const DossierEntry& entry);

// Writes report.md / report.csv / plot_hourly.csv / dossiers/{id}.md under
// out_dir (the JSON file is the pipeline's job).
void emit_report(const EvalReport& report, const std::string& out_dir);

}  // namespace buzz
