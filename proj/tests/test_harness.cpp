#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>
#include <json.hpp>

#include "buzz/errors.hpp"
#include "buzz/pipeline.hpp"
#include "support/synth.hpp"
#include "support/test_util.hpp"

using namespace buzz;

namespace {

// Small, fast experiment: tiny corpus, narrow hashing dim, pinned GBDT.
ExperimentConfig small_config(const test::TempDir& dir, const std::string& out_name,
                              int n = 160) {
    test::SynthData data = test::make_synthetic_dataset({n, 42, 3, 14.5, 0.4, 3.0, 0.3});
    const std::string dataset = dir.file(out_name + "-data.jsonl");
    const std::string topic_map = dir.file(out_name + "-topics.json");
    test::write_synthetic_dataset(data, dataset, topic_map);

    ExperimentConfig cfg;
    cfg.dataset = dataset;
    cfg.out_dir = dir.file(out_name);
    cfg.seed = 42;
    cfg.encoder.dim = 96;
    cfg.provider.kind = ProviderSpec::Kind::Mock;
    cfg.provider.mock_script = "rationale";
    cfg.provider.mock_topic_map = topic_map;
    cfg.provider.model = "mock";
    cfg.n_iter = 1;
    cfg.folds = 2;
    cfg.space_overrides["gbdt.n_estimators"] = {DistKind::Categorical, 0, 0, {40}};
    cfg.space_overrides["gbdt.learning_rate"] = {DistKind::Categorical, 0, 0, {0.2}};
    cfg.space_overrides["gbdt.max_depth"] = {DistKind::Categorical, 0, 0, {3}};
    cfg.space_overrides["gbdt.min_samples_leaf"] = {DistKind::Categorical, 0, 0, {2}};
    cfg.space_overrides["gbdt.subsample_fraction"] = {DistKind::Categorical, 0, 0, {1.0}};
    return cfg;
}

const ReportRow& find_row(const EvalReport& report, const std::string& group,
                          const std::string& variant) {
    for (const auto& row : report.rows)
        if (row.group == group && row.variant == variant) return row;
    throw std::runtime_error("row not found: " + group + "/" + variant);
}

}  // namespace

TEST_CASE("config round-trips losslessly") {
    test::TempDir dir("config");
    ExperimentConfig cfg;
    cfg.dataset = "data/hashtags.jsonl";
    cfg.split_fraction = 0.75;
    cfg.seed = 7;
    cfg.out_dir = "out/exp1";
    cfg.cache_dir = "cache/exp1";
    cfg.regressors = {RegressorKind::Gbdt, RegressorKind::RandomForest, RegressorKind::Mlp};
    cfg.variants = {Variant::Baseline, Variant::FullReasoning, Variant::LlmFewShot};
    cfg.n_iter = 5;
    cfg.folds = 4;
    cfg.fewshot_buckets = 5;
    cfg.dossier_count = 3;
    cfg.encoder.kind = EncoderSpec::Kind::Hashing;
    cfg.encoder.dim = 256;
    cfg.encoder2 = EncoderSpec{EncoderSpec::Kind::Remote, 4096, 2, 4, "", "http://e", "m"};
    cfg.provider.kind = ProviderSpec::Kind::Http;
    cfg.provider.endpoint = "http://localhost:1234/v1";
    cfg.provider.model = "test";
    cfg.provider.temperature = 0.25;
    cfg.space_overrides["gbdt.learning_rate"] = {DistKind::LogReal, 0.001, 0.1, {}};
    cfg.space_overrides["mlp.batch_size"] = {DistKind::Categorical, 0, 0, {32, 64}};

    const std::string path = dir.file("config.ini");
    save_config(cfg, path);
    ExperimentConfig loaded = load_config(path);
    CHECK(loaded == cfg);
    // canonical form is a fixed point
    save_config(loaded, dir.file("config2.ini"));
    CHECK(test::read_file(path) == test::read_file(dir.file("config2.ini")));
    CHECK(config_digest(cfg) == config_digest(loaded));
}

TEST_CASE("config parser errors") {
    test::TempDir dir("badconfig");
    test::write_file(dir.file("a.ini"), "[run]\nseed 42\n");
    CHECK_THROWS_AS(load_config(dir.file("a.ini")), ConfigError);
    test::write_file(dir.file("b.ini"), "[run\nseed = 1\n");
    CHECK_THROWS_AS(load_config(dir.file("b.ini")), ConfigError);
    test::write_file(dir.file("c.ini"), "[data]\nsplit_fraction = 1.5\n");
    CHECK_THROWS_AS(load_config(dir.file("c.ini")), ConfigError);
    test::write_file(dir.file("d.ini"), "[search.gbdt]\nlearning_rate = banana\n");
    CHECK_THROWS_AS(load_config(dir.file("d.ini")), ConfigError);
    test::write_file(dir.file("e.ini"), "[run]\nvariants = baseline,warp_drive\n");
    CHECK_THROWS_AS(load_config(dir.file("e.ini")), ConfigError);
    CHECK_THROWS_AS(load_config(dir.file("missing.ini")), ConfigError);
}

TEST_CASE("report rendering reproduces published formatting") {
    EvalReport report;
    report.config_digest = "cafe";
    ReportRow baseline;
    baseline.group = "gbdt";
    baseline.variant = "baseline";
    baseline.encoder_id = "hashing-d768-n2.4";
    baseline.result = {1.035, 0.821, 0.332, false, 100, 0};
    ReportRow augmented = baseline;
    augmented.variant = "full_reasoning";
    augmented.result = {1.018, 0.802, 0.387, false, 100, 0};
    augmented.improvements =
        Improvements{relative_improvement(1.035, 1.018, Direction::LowerBetter),
                     relative_improvement(0.821, 0.802, Direction::LowerBetter),
                     relative_improvement(0.332, 0.387, Direction::HigherBetter)};
    report.rows = {baseline, augmented};
    report.hourly.resize(24);
    for (int h = 0; h < 24; ++h) report.hourly[static_cast<size_t>(h)] = {h, h == 9 ? 3 : 0, 14.2};

    const std::string md = render_markdown(report);
    CHECK(md.find("1.018 (1.64%)") != std::string::npos);
    CHECK(md.find("0.387 (16.57%)") != std::string::npos);
    CHECK(md.find("**1.018 (1.64%)**") != std::string::npos);  // best marked
    CHECK(md.find("_1.035_") != std::string::npos);            // second marked

    const std::string csv = render_csv(report);
    CHECK(csv.find("gbdt,baseline,hashing-d768-n2.4,rmse,1.035000,,100,0") != std::string::npos);
    CHECK(csv.find("gbdt,full_reasoning,hashing-d768-n2.4,src,0.387000,16.5663,100,0") !=
          std::string::npos);

    const std::string plot = render_plot_csv(report);
    CHECK(plot.find("hour,post_count,mean_log_view") == 0);
    CHECK(plot.find("9,3,14.200000") != std::string::npos);
    CHECK(plot.find("0,0,\n") != std::string::npos);  // empty hours have no mean

    // negative improvements render with a leading minus, not suppressed
    ReportRow worse = augmented;
    worse.variant = "time_only";
    worse.result = {1.063, 0.846, 0.286, false, 100, 0};
    worse.improvements =
        Improvements{relative_improvement(1.035, 1.063, Direction::LowerBetter),
                     relative_improvement(0.821, 0.846, Direction::LowerBetter),
                     relative_improvement(0.332, 0.286, Direction::HigherBetter)};
    report.rows.push_back(worse);
    const std::string md2 = render_markdown(report);
    CHECK(md2.find("(-2.71%)") != std::string::npos);

    // round trip through json
    EvalReport back = report_from_json(report_to_json(report));
    CHECK(back.rows.size() == report.rows.size());
    CHECK(render_markdown(back) == md2);

    EvalReport empty;
    test::TempDir dir("emptyreport");
    CHECK_THROWS_AS(emit_report(empty, dir.str()), DataError);
}

TEST_CASE("pipeline end to end with mock provider") {
    test::TempDir dir("pipe");
    ExperimentConfig cfg = small_config(dir, "run1");

    MockScript script;
    script.kind = MockScript::Kind::Rationale;
    {
        std::ifstream in(cfg.provider.mock_topic_map);
        nlohmann::json map = nlohmann::json::parse(in);
        for (auto it = map.begin(); it != map.end(); ++it)
            script.topic_words[it.key()] = it.value().get<std::string>();
    }
    MockProvider mock(script);
    RunHooks hooks;
    hooks.provider = &mock;

    EvalReport report = run_pipeline(cfg, hooks);
    REQUIRE(report.rows.size() == 2);
    const ReportRow& baseline = find_row(report, "gbdt", "baseline");
    const ReportRow& full = find_row(report, "gbdt", "full_reasoning");
    CHECK(baseline.result.n == 32);  // 20% of 160
    CHECK_FALSE(baseline.improvements.has_value());
    REQUIRE(full.improvements.has_value());
    // reasoning carries the topic signal, so SRC must improve
    CHECK(full.result.src > baseline.result.src);
    CHECK(full.improvements->src_pct > 0.0);

    const int first_run_calls = mock.calls();
    CHECK(first_run_calls == 160);  // one rationale per record, train and test

    // artifacts exist
    CHECK(std::filesystem::exists(cfg.out_dir + "/split.json"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/rationales/full_reasoning.jsonl"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/report.json"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/report.md"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/report.csv"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/plot_hourly.csv"));
    CHECK(std::filesystem::exists(cfg.out_dir + "/models/gbdt.baseline.hashing-d96-n2.4.json"));
    CHECK(report.parse_status_counts.at("full_reasoning:ok") == 160);

    // rerun with caches: byte-identical report, zero provider calls
    const std::string md_before = test::read_file(cfg.out_dir + "/report.md");
    const std::string csv_before = test::read_file(cfg.out_dir + "/report.csv");
    EvalReport again = run_pipeline(cfg, hooks);
    CHECK(mock.calls() == first_run_calls);
    CHECK(test::read_file(cfg.out_dir + "/report.md") == md_before);
    CHECK(test::read_file(cfg.out_dir + "/report.csv") == csv_before);
    CHECK(render_markdown(again) == render_markdown(report));

    // resume correctness: delete the report, keep caches
    std::filesystem::remove(cfg.out_dir + "/report.json");
    std::filesystem::remove(cfg.out_dir + "/report.md");
    EvalReport resumed = run_pipeline(cfg, hooks);
    CHECK(mock.calls() == first_run_calls);
    CHECK(test::read_file(cfg.out_dir + "/report.md") == md_before);
    CHECK(render_markdown(resumed) == md_before);
}

TEST_CASE("pipeline aborts cleanly on malformed datasets and bad providers") {
    test::TempDir dir("pipeerr");
    SUBCASE("malformed dataset line") {
        ExperimentConfig cfg = small_config(dir, "bad", 40);
        std::ofstream app(cfg.dataset, std::ios::app);
        app << "{broken json\n";
        app.close();
        CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("stage ingest"), DataError);
    }
    SUBCASE("provider outage surfaces record ids and keeps partial store") {
        ExperimentConfig cfg = small_config(dir, "outage", 40);
        MockScript script;
        script.kind = MockScript::Kind::Fail;
        MockProvider mock(script);
        RunHooks hooks;
        hooks.provider = &mock;
        CHECK_THROWS_WITH_AS(run_pipeline(cfg, hooks), doctest::Contains("stage reason"),
                             ProviderError);
    }
    SUBCASE("baseline-only run needs no provider at all") {
        ExperimentConfig cfg = small_config(dir, "baseonly", 40);
        cfg.variants = {Variant::Baseline};
        cfg.provider.kind = ProviderSpec::Kind::Http;  // unreachable, but never used
        cfg.provider.endpoint = "http://127.0.0.1:1";
        EvalReport report = run_pipeline(cfg);
        CHECK(report.rows.size() == 1);
    }
}

TEST_CASE("ablation produces every variant exactly once per regressor") {
    test::TempDir dir("ablate");
    ExperimentConfig cfg = small_config(dir, "abl", 120);
    EvalReport report = run_ablation(cfg);
    REQUIRE(report.rows.size() == 5);
    for (const char* variant :
         {"baseline", "topic_only", "audience_only", "time_only", "full_reasoning"}) {
        int count = 0;
        for (const auto& row : report.rows)
            if (row.group == "gbdt" && row.variant == variant) ++count;
        CHECK(count == 1);
    }
    // baseline row identical to a plain pipeline run with the same config
    EvalReport plain = run_pipeline(cfg);
    CHECK(find_row(plain, "gbdt", "baseline").result.rmse ==
          find_row(report, "gbdt", "baseline").result.rmse);
    CHECK(find_row(plain, "gbdt", "baseline").result.src ==
          find_row(report, "gbdt", "baseline").result.src);
}

TEST_CASE("encoder comparison keys rows by encoder id") {
    test::TempDir dir("encoders");
    ExperimentConfig cfg = small_config(dir, "enc", 100);
    cfg.encoder2 = cfg.encoder;
    cfg.encoder2->dim = 48;
    EvalReport report = run_encoder_comparison(cfg);
    REQUIRE(report.rows.size() == 2);
    CHECK(report.rows[0].encoder_id == "hashing-d96-n2.4");
    CHECK(report.rows[1].encoder_id == "hashing-d48-n2.4");
    CHECK(report.rows[0].variant == "baseline");
    CHECK(report.rows[1].variant == "baseline");

    // identical encoder twice -> identical rows
    ExperimentConfig same = small_config(dir, "encsame", 100);
    same.encoder2 = same.encoder;
    EvalReport twin = run_encoder_comparison(same);
    CHECK(twin.rows[0].result.rmse == twin.rows[1].result.rmse);
    CHECK(twin.rows[0].result.src == twin.rows[1].result.src);

    ExperimentConfig missing = small_config(dir, "encmissing", 100);
    missing.encoder2.reset();
    CHECK_THROWS_AS(run_encoder_comparison(missing), ConfigError);
}

TEST_CASE("llm baseline behaviors") {
    test::TempDir dir("fewshot");
    SUBCASE("constant-answer mock: RMSE equals the constant predictor, SRC degenerate") {
        ExperimentConfig cfg = small_config(dir, "fs1", 100);
        cfg.variants = {Variant::LlmFewShot};
        cfg.provider.mock_script = "fixed";
        cfg.provider.mock_fixed_text = "14.9";
        EvalReport report = run_llm_baseline(cfg);
        REQUIRE(report.rows.size() == 1);
        const ReportRow& row = report.rows[0];
        CHECK(row.group == "fewshot_llm");
        CHECK(row.result.src_degenerate);
        CHECK(row.result.src == 0.0);
        CHECK(row.result.failures == 0);

        // constant-predictor oracle
        ParseReport parsed = load_dataset(cfg.dataset);
        TemporalSplit split = temporal_split(parsed.records, 0.8);
        std::vector<double> truth, constant;
        for (const auto& rec : parsed.records) {
            if (std::find(split.test_ids.begin(), split.test_ids.end(), rec.id) !=
                split.test_ids.end()) {
                truth.push_back(normalize_target(rec.view_count));
                constant.push_back(14.9);
            }
        }
        CHECK(row.result.rmse == doctest::Approx(rmse(constant, truth)).epsilon(1e-12));
    }
    SUBCASE("out-of-range answers clamp to the train range") {
        ExperimentConfig cfg = small_config(dir, "fs2", 100);
        cfg.provider.mock_script = "fixed";
        cfg.provider.mock_fixed_text = "25";
        EvalReport report = run_llm_baseline(cfg);
        const ReportRow& row = report.rows[0];
        // every prediction clamps to max(train log-views); RMSE against that constant
        ParseReport parsed = load_dataset(cfg.dataset);
        TemporalSplit split = temporal_split(parsed.records, 0.8);
        double train_max = 0;
        std::vector<double> truth;
        for (const auto& rec : parsed.records) {
            const double z = normalize_target(rec.view_count);
            if (std::find(split.train_ids.begin(), split.train_ids.end(), rec.id) !=
                split.train_ids.end())
                train_max = std::max(train_max, z);
            else
                truth.push_back(z);
        }
        std::vector<double> constant(truth.size(), train_max);
        CHECK(row.result.rmse == doctest::Approx(rmse(constant, truth)).epsilon(1e-12));
    }
    SUBCASE("prose answers are counted as failures, not imputed") {
        ExperimentConfig cfg = small_config(dir, "fs3", 100);
        cfg.provider.mock_script = "fixed";
        cfg.provider.mock_fixed_text = "cannot say";
        set_log_sink([](LogLevel, const std::string&) {});  // 20 expected warnings
        EvalReport report = run_llm_baseline(cfg);
        set_log_sink(nullptr);
        const ReportRow& row = report.rows[0];
        CHECK(row.result.n == 0);
        CHECK(row.result.failures == 20);
        CHECK(std::isnan(row.result.rmse));
        CHECK(render_markdown(report).find("n/a") != std::string::npos);
        bool noted = false;
        for (const auto& note : report.notes)
            noted = noted || note.find("unscorable") != std::string::npos;
        CHECK(noted);
    }
}

TEST_CASE("dossiers are emitted for reasoning variants") {
    test::TempDir dir("dossier");
    ExperimentConfig cfg = small_config(dir, "dos", 80);
    cfg.dossier_count = 3;
    EvalReport report = run_pipeline(cfg);
    REQUIRE(report.dossiers.size() == 3);
    CHECK(std::filesystem::exists(cfg.out_dir + "/dossiers/" + report.dossiers[0].id + ".md"));
    const std::string dossier =
        test::read_file(cfg.out_dir + "/dossiers/" + report.dossiers[0].id + ".md");
    CHECK(dossier.find("predicted log-views") != std::string::npos);
    CHECK(dossier.find("TOPIC_CATEGORY") != std::string::npos);
}

TEST_CASE("hourly plot data covers all 24 hours") {
    test::TempDir dir("hourly");
    ExperimentConfig cfg = small_config(dir, "hour", 140);
    cfg.variants = {Variant::Baseline};
    EvalReport report = run_pipeline(cfg);
    REQUIRE(report.hourly.size() == 24);
    long total = 0;
    for (const auto& h : report.hourly) total += h.post_count;
    CHECK(total == 140);
}
