#include <cstdio>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "buzz/errors.hpp"
#include "buzz/pipeline.hpp"

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string dataset;
    std::string out_dir;
    std::string cache_dir;
    long long seed = -1;
    bool mock_llm = false;
};

buzz::ExperimentConfig make_config(const GlobalOpts& opts) {
    buzz::ExperimentConfig cfg;
    if (!opts.config_path.empty()) cfg = buzz::load_config(opts.config_path);
    if (!opts.dataset.empty()) cfg.dataset = opts.dataset;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (!opts.cache_dir.empty()) cfg.cache_dir = opts.cache_dir;
    if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
    if (opts.mock_llm) cfg.provider.kind = buzz::ProviderSpec::Kind::Mock;
    return cfg;
}

void print_rows(const buzz::EvalReport& report) {
    for (const auto& row : report.rows) {
        std::printf("%-14s %-16s rmse=%.3f mae=%.3f src=%.3f n=%d failures=%d\n",
                    row.group.c_str(), row.variant.c_str(), row.result.rmse, row.result.mae,
                    row.result.src, row.result.n, row.result.failures);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hashtag popularity forecasting toolkit"};
    app.require_subcommand(1);

    GlobalOpts opts;
    app.add_option("--config", opts.config_path, "experiment config file")->check(CLI::ExistingFile);
    app.add_option("--dataset", opts.dataset, "dataset file (line-delimited records)");
    app.add_option("--out", opts.out_dir, "output directory");
    app.add_option("--cache-dir", opts.cache_dir, "response/embedding cache directory");
    app.add_option("--seed", opts.seed, "master random seed");
    app.add_flag("--mock-llm", opts.mock_llm, "use the deterministic mock provider");
    app.fallthrough();

    auto* ingest = app.add_subcommand("ingest", "validate a dataset file");
    auto* split = app.add_subcommand("split", "write the temporal split manifest");
    auto* reason = app.add_subcommand("reason", "generate rationales for all records");
    auto* encode = app.add_subcommand("encode", "build embedding matrices");
    auto* train = app.add_subcommand("train", "hyperparameter search and model fitting");
    auto* evaluate = app.add_subcommand("evaluate", "full pipeline: train, predict, report");
    auto* ablate = app.add_subcommand("ablate", "single-dimension reasoning ablation");
    auto* encoders = app.add_subcommand("encoders", "compare two encoder backends");
    auto* llm_baseline = app.add_subcommand("llm-baseline", "few-shot numeric LLM baseline");
    auto* report_cmd = app.add_subcommand("report", "re-emit report files from report.json");

    CLI11_PARSE(app, argc, argv);

    try {
        const buzz::ExperimentConfig cfg = make_config(opts);

        if (ingest->parsed()) {
            buzz::ParseReport parsed = buzz::stage_ingest(cfg);
            std::printf("records: %zu\n", parsed.records.size());
            for (const auto& w : parsed.warnings)
                std::printf("warning line %d: %s\n", w.line, w.message.c_str());
            for (const auto& e : parsed.errors)
                std::printf("error line %d: %s\n", e.line, e.message.c_str());
            if (!parsed.ok()) {
                std::printf("ingest failed: %zu malformed line(s)\n", parsed.errors.size());
                return 3;
            }
            std::printf("dataset ok\n");
        } else if (split->parsed()) {
            buzz::TemporalSplit s = buzz::stage_split(cfg);
            std::printf("train=%zu test=%zu boundary=%s\n", s.train_ids.size(),
                        s.test_ids.size(), buzz::format_iso8601(s.boundary_time).c_str());
            std::printf("wrote %s/split.json\n", cfg.out_dir.c_str());
        } else if (reason->parsed()) {
            buzz::stage_reason(cfg);
            std::printf("rationale stores written under %s/rationales\n", cfg.out_dir.c_str());
        } else if (encode->parsed()) {
            buzz::stage_encode(cfg);
            std::printf("embedding matrices written under %s/embeddings\n", cfg.out_dir.c_str());
        } else if (train->parsed()) {
            buzz::stage_train(cfg);
            std::printf("models written under %s/models\n", cfg.out_dir.c_str());
        } else if (evaluate->parsed()) {
            buzz::EvalReport report = buzz::run_pipeline(cfg);
            print_rows(report);
            std::printf("report written to %s/report.md\n", cfg.out_dir.c_str());
        } else if (ablate->parsed()) {
            buzz::EvalReport report = buzz::run_ablation(cfg);
            print_rows(report);
            std::printf("report written to %s/report.md\n", cfg.out_dir.c_str());
        } else if (encoders->parsed()) {
            buzz::EvalReport report = buzz::run_encoder_comparison(cfg);
            print_rows(report);
            std::printf("report written to %s/report.md\n", cfg.out_dir.c_str());
        } else if (llm_baseline->parsed()) {
            buzz::EvalReport report = buzz::run_llm_baseline(cfg);
            print_rows(report);
            std::printf("report written to %s/report.md\n", cfg.out_dir.c_str());
        } else if (report_cmd->parsed()) {
            std::ifstream in(cfg.out_dir + "/report.json", std::ios::binary);
            if (!in) throw buzz::DataError("no report.json under " + cfg.out_dir);
            nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
            if (j.is_discarded()) throw buzz::DataError("report.json is not valid JSON");
            buzz::EvalReport report = buzz::report_from_json(j);
            buzz::emit_report(report, cfg.out_dir);
            std::printf("report files re-emitted under %s\n", cfg.out_dir.c_str());
        }
        return 0;
    } catch (const buzz::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 5;
    }
}
