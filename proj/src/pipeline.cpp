#include "buzz/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "buzz/digest.hpp"
#include "buzz/errors.hpp"
#include "buzz/log.hpp"

namespace buzz {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<Dimension> dims_for(Variant variant) {
    switch (variant) {
        case Variant::FullReasoning:
            return {kAllDimensions.begin(), kAllDimensions.end()};
        case Variant::TopicOnly: return {Dimension::TopicCategory};
        case Variant::AudienceOnly: return {Dimension::TargetAudience};
        case Variant::TimeOnly: return {Dimension::PostingTime};
        default: return {};
    }
}

std::string template_version_for(const std::vector<Dimension>& dims) {
    std::string version = kRationaleTemplateVersion;
    if (dims.size() < kAllDimensions.size()) {
        version += "/";
        for (size_t i = 0; i < dims.size(); ++i) {
            if (i) version += "+";
            version += dimension_label(dims[i]);
        }
    }
    return version;
}

std::string sanitize_filename(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '-';
    return s;
}

uint64_t derived_seed(uint64_t seed, RegressorKind kind, Variant variant) {
    return mix64(mix64(seed) ^
                 fnv1a64(std::string(regressor_kind_name(kind)) + ":" + variant_name(variant)));
}

std::unique_ptr<Provider> build_raw_provider(const ProviderSpec& spec) {
    if (spec.kind == ProviderSpec::Kind::Mock) {
        MockScript script;
        if (spec.mock_script == "rationale") {
            script.kind = MockScript::Kind::Rationale;
        } else if (spec.mock_script == "fixed") {
            script.kind = MockScript::Kind::FixedText;
            script.fixed_text = spec.mock_fixed_text;
        } else if (spec.mock_script == "fail") {
            script.kind = MockScript::Kind::Fail;
        } else {
            throw ConfigError("unknown mock script '" + spec.mock_script + "'");
        }
        if (!spec.mock_topic_map.empty()) {
            std::ifstream in(spec.mock_topic_map, std::ios::binary);
            if (!in) throw ConfigError("cannot open mock topic map: " + spec.mock_topic_map);
            json map = json::parse(in, nullptr, false);
            if (map.is_discarded() || !map.is_object())
                throw ConfigError("mock topic map is not a JSON object: " + spec.mock_topic_map);
            for (auto it = map.begin(); it != map.end(); ++it)
                script.topic_words[it.key()] = it.value().get<std::string>();
        }
        return std::make_unique<MockProvider>(std::move(script));
    }
    RetryPolicy retry;
    retry.max_attempts = spec.retry_max_attempts;
    retry.base_delay_ms = spec.retry_base_ms;
    return http_provider_from_env(spec.endpoint, retry);
}

std::unique_ptr<Encoder> build_encoder(const EncoderSpec& spec, const std::string& cache_dir) {
    switch (spec.kind) {
        case EncoderSpec::Kind::Hashing:
            return std::make_unique<HashingEncoder>(spec.dim, spec.ngram_min, spec.ngram_max);
        case EncoderSpec::Kind::Precomputed:
            if (spec.path.empty())
                throw ConfigError("precomputed encoder requires encoder.path");
            return std::make_unique<PrecomputedStore>(spec.path);
        case EncoderSpec::Kind::Remote: {
            const char* base = std::getenv("BUZZ_API_BASE");
            const char* key = std::getenv("BUZZ_API_KEY");
            return std::make_unique<RemoteEncoder>(
                base ? base : spec.endpoint, key ? key : "", spec.model, spec.dim,
                cache_dir + "/embeddings");
        }
    }
    throw InternalError("unhandled encoder kind");
}

struct Stage {
    const ExperimentConfig& cfg;
    const RunHooks& hooks;
    fs::path out;

    std::vector<HashtagRecord> records;  // dataset file order
    std::unordered_map<std::string, const HashtagRecord*> by_id;
    TemporalSplit split;
    std::vector<const HashtagRecord*> ordered;  // train rows then test rows
    size_t n_train = 0;
    std::vector<double> y_train, y_test;

    std::unique_ptr<Provider> owned_raw;
    std::unique_ptr<CachedProvider> cached;

    std::unique_ptr<Encoder> owned_encoder, owned_encoder2;

    explicit Stage(const ExperimentConfig& config, const RunHooks& run_hooks)
        : cfg(config), hooks(run_hooks), out(config.out_dir) {}

    Provider& provider() {
        if (hooks.provider && !cached) {
            cached = std::make_unique<CachedProvider>(*hooks.provider,
                                                      cfg.resolved_cache_dir() + "/chat",
                                                      cfg.provider.concurrency,
                                                      cfg.provider.rate_per_sec);
        } else if (!cached) {
            owned_raw = build_raw_provider(cfg.provider);
            cached = std::make_unique<CachedProvider>(*owned_raw,
                                                      cfg.resolved_cache_dir() + "/chat",
                                                      cfg.provider.concurrency,
                                                      cfg.provider.rate_per_sec);
        }
        return *cached;
    }

    Encoder& encoder(int which) {
        if (which == 0) {
            if (hooks.encoder) return *hooks.encoder;
            if (!owned_encoder)
                owned_encoder = build_encoder(cfg.encoder, cfg.resolved_cache_dir());
            return *owned_encoder;
        }
        if (hooks.encoder2) return *hooks.encoder2;
        if (!owned_encoder2) {
            if (!cfg.encoder2)
                throw ConfigError("encoder comparison requires an [encoder2] section");
            owned_encoder2 = build_encoder(*cfg.encoder2, cfg.resolved_cache_dir());
        }
        return *owned_encoder2;
    }

    PromptOptions prompt_options() const {
        return {cfg.provider.model, cfg.provider.temperature, cfg.provider.max_tokens};
    }
};

void load_and_split(Stage& stage) {
    if (stage.cfg.dataset.empty()) throw ConfigError("data.dataset is not set");
    ParseReport parsed = load_dataset(stage.cfg.dataset);
    if (!parsed.ok()) {
        std::string msg = "stage ingest: " + std::to_string(parsed.errors.size()) +
                          " malformed line(s); first: line " +
                          std::to_string(parsed.errors.front().line) + " " +
                          parsed.errors.front().message;
        throw DataError(msg);
    }
    for (const auto& w : parsed.warnings)
        log_warn("dataset line " + std::to_string(w.line) + ": " + w.message);
    stage.records = std::move(parsed.records);

    stage.split = temporal_split(stage.records, stage.cfg.split_fraction);
    fs::create_directories(stage.out);
    save_split(stage.split, (stage.out / "split.json").string());

    for (const auto& r : stage.records) stage.by_id[r.id] = &r;
    stage.n_train = stage.split.train_ids.size();
    for (const auto& id : stage.split.train_ids) {
        const auto* rec = stage.by_id.at(id);
        stage.ordered.push_back(rec);
        stage.y_train.push_back(normalize_target(rec->view_count));
    }
    UtcSeconds max_train = stage.ordered.back()->posting_time;
    for (const auto& id : stage.split.test_ids) {
        const auto* rec = stage.by_id.at(id);
        stage.ordered.push_back(rec);
        stage.y_test.push_back(normalize_target(rec->view_count));
        if (rec->posting_time < max_train)
            throw InternalError("temporal split boundary violated for record " + rec->id);
    }
}

// Generates (or reloads) the rationale store for one variant. Failures are
// collected across the whole batch; the successfully generated entries are
// persisted before the stage aborts, so a rerun resumes from them.
std::unordered_map<std::string, Rationale> ensure_rationales(Stage& stage, Variant variant) {
    const std::vector<Dimension> dims = dims_for(variant);
    const std::string version = template_version_for(dims);
    fs::create_directories(stage.out / "rationales");
    const std::string store_path =
        (stage.out / "rationales" / (std::string(variant_name(variant)) + ".jsonl")).string();

    std::unordered_map<std::string, Rationale> have;
    if (fs::exists(store_path)) {
        for (auto& entry : load_rationale_store(store_path)) {
            if (entry.template_version == version && entry.model == stage.cfg.provider.model)
                have.emplace(entry.id, std::move(entry.rationale));
        }
    }

    std::vector<const HashtagRecord*> missing;
    for (const auto& rec : stage.records)
        if (!have.count(rec.id)) missing.push_back(&rec);

    std::vector<std::pair<std::string, std::string>> failures;
    if (!missing.empty()) {
        Provider& provider = stage.provider();
        const PromptOptions options = stage.prompt_options();
        std::vector<std::optional<Rationale>> generated(missing.size());
        std::mutex failure_mutex;
        std::atomic<size_t> next{0};
        const int workers =
            std::max(1, std::min<int>(stage.cfg.provider.concurrency,
                                      static_cast<int>(missing.size())));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= missing.size()) return;
                    try {
                        generated[i] = generate_rationale(*missing[i], provider, dims, options);
                    } catch (const Error& e) {
                        std::lock_guard<std::mutex> lock(failure_mutex);
                        failures.emplace_back(missing[i]->id, e.what());
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        for (size_t i = 0; i < missing.size(); ++i)
            if (generated[i]) have.emplace(missing[i]->id, std::move(*generated[i]));
    }

    // persist in dataset order so the store is byte-stable across runs
    std::vector<RationaleEntry> entries;
    for (const auto& rec : stage.records) {
        auto it = have.find(rec.id);
        if (it != have.end())
            entries.push_back({rec.id, it->second, version, stage.cfg.provider.model});
    }
    save_rationale_store(entries, store_path);

    if (!failures.empty()) {
        std::sort(failures.begin(), failures.end());
        std::string ids;
        for (size_t i = 0; i < std::min<size_t>(failures.size(), 5); ++i)
            ids += (i ? ", " : "") + failures[i].first;
        throw ProviderError("stage reason (" + std::string(variant_name(variant)) + ") failed for " +
                            std::to_string(failures.size()) + " record(s): " + ids +
                            (failures.size() > 5 ? ", ..." : "") +
                            " (partial rationale store retained for resume)");
    }
    return have;
}

// Embedding matrix over stage.ordered rows, loaded from disk when the stored
// manifest matches the current inputs digest-for-digest.
DesignMatrix ensure_embeddings(Stage& stage, Variant variant, Encoder& encoder,
                               const std::unordered_map<std::string, Rationale>* rationales) {
    std::vector<AugmentedInput> inputs;
    std::vector<std::string> digests;
    inputs.reserve(stage.ordered.size());
    for (const auto* rec : stage.ordered) {
        if (rationales) {
            auto it = rationales->find(rec->id);
            if (it == rationales->end())
                throw InternalError("missing rationale for record " + rec->id);
            inputs.push_back(augment(rec->text, rec->posting_time, it->second.raw_text));
        } else {
            inputs.push_back(augment(rec->text, rec->posting_time));
        }
        digests.push_back(sha256_hex(inputs.back().text));
    }

    fs::create_directories(stage.out / "embeddings");
    const std::string base =
        (stage.out / "embeddings" /
         (std::string(variant_name(variant)) + "." + sanitize_filename(encoder.id())))
            .string();
    const std::string manifest_path = base + ".manifest.json";

    if (fs::exists(manifest_path)) {
        try {
            EmbeddingStore store = load_embedding_store(manifest_path);
            if (store.encoder_id == encoder.id() && store.matrix.cols == encoder.dimension() &&
                store.digests == digests) {
                return std::move(store.matrix);
            }
        } catch (const Error& e) {
            log_warn("recomputing embeddings, stored matrix unusable: " + std::string(e.what()));
        }
    }

    DesignMatrix matrix = batch_encode(inputs, encoder);
    save_embedding_store(matrix, encoder.id(), digests, base + ".bin", manifest_path);
    return matrix;
}

DesignMatrix slice_rows(const DesignMatrix& X, int begin, int end) {
    DesignMatrix out;
    out.cols = X.cols;
    out.rows = end - begin;
    out.values.assign(X.values.begin() + static_cast<size_t>(begin) * X.cols,
                      X.values.begin() + static_cast<size_t>(end) * X.cols);
    return out;
}

std::vector<HourlyStat> hourly_stats(const std::vector<HashtagRecord>& records) {
    std::vector<HourlyStat> hourly(24);
    for (int h = 0; h < 24; ++h) hourly[static_cast<size_t>(h)].hour = h;
    for (const auto& rec : records) {
        auto& slot = hourly[static_cast<size_t>(hour_of_day(rec.posting_time))];
        ++slot.post_count;
        slot.mean_log_view += normalize_target(rec.view_count);
    }
    for (auto& slot : hourly)
        if (slot.post_count > 0) slot.mean_log_view /= static_cast<double>(slot.post_count);
    return hourly;
}

ReportRow fewshot_row(Stage& stage, EvalReport& report) {
    std::vector<BucketTarget> targets;
    for (size_t i = 0; i < stage.n_train; ++i)
        targets.push_back({stage.ordered[i]->id, stage.y_train[i]});
    ViewBuckets buckets = bucketize(std::move(targets), stage.cfg.fewshot_buckets);

    std::vector<FewshotDemo> demos;
    for (const auto& rep : buckets.representatives) {
        const auto* rec = stage.by_id.at(rep.id);
        demos.push_back({rec->text, rec->posting_time, rep.log_view});
    }
    const auto [lo_it, hi_it] = std::minmax_element(stage.y_train.begin(), stage.y_train.end());
    const double range_min = *lo_it;
    const double range_max = *hi_it;

    Provider& provider = stage.provider();
    const PromptOptions options = stage.prompt_options();

    std::vector<double> pred, truth;
    int failures = 0;
    for (size_t i = stage.n_train; i < stage.ordered.size(); ++i) {
        const auto* rec = stage.ordered[i];
        try {
            ChatRequest request =
                build_fewshot_prompt(*rec, demos, range_min, range_max, options);
            ChatResponse response = provider.complete(request);
            NumericPrediction p = extract_numeric(response.content, range_min, range_max);
            pred.push_back(p.value);
            truth.push_back(stage.y_test[i - stage.n_train]);
        } catch (const ExtractionError& e) {
            ++failures;
            log_warn("few-shot extraction failed for " + rec->id + ": " + e.what());
        } catch (const ProviderError& e) {
            ++failures;
            log_warn("few-shot provider failure for " + rec->id + ": " + e.what());
        }
    }

    ReportRow row;
    row.group = "fewshot_llm";
    row.variant = variant_name(Variant::LlmFewShot);
    row.result = evaluate_predictions(pred, truth, failures);
    if (failures > 0)
        report.notes.push_back("fewshot_llm: " + std::to_string(failures) +
                               " unscorable instance(s) excluded from metrics (effective n=" +
                               std::to_string(row.result.n) + ")");
    if (row.result.src_degenerate && row.result.n > 0)
        report.notes.push_back(
            "fewshot_llm: SRC degenerate (constant predictions carry no rank information)");
    return row;
}

void attach_improvements(EvalReport& report) {
    for (auto& row : report.rows) {
        if (row.variant == variant_name(Variant::Baseline) || row.group == "fewshot_llm") continue;
        const ReportRow* baseline = nullptr;
        for (const auto& cand : report.rows) {
            if (cand.group == row.group && cand.encoder_id == row.encoder_id &&
                cand.variant == variant_name(Variant::Baseline)) {
                baseline = &cand;
                break;
            }
        }
        if (!baseline || !std::isfinite(baseline->result.rmse) ||
            !std::isfinite(row.result.rmse))
            continue;
        Improvements imp;
        imp.rmse_pct =
            relative_improvement(baseline->result.rmse, row.result.rmse, Direction::LowerBetter);
        imp.mae_pct =
            relative_improvement(baseline->result.mae, row.result.mae, Direction::LowerBetter);
        if (baseline->result.src != 0.0)
            imp.src_pct = relative_improvement(baseline->result.src, row.result.src,
                                               Direction::HigherBetter);
        row.improvements = imp;
    }
}

void write_run_meta(Stage& stage, double elapsed_sec) {
    json meta{{"elapsed_sec", elapsed_sec},
              {"finished_at", std::chrono::duration_cast<std::chrono::seconds>(
                                  std::chrono::system_clock::now().time_since_epoch())
                                  .count()}};
    if (stage.cached) {
        CacheStats stats = stage.cached->stats();
        meta["cache"] = {{"hits", stats.hits},
                         {"misses", stats.misses},
                         {"evictions", stats.evictions}};
    }
    std::ofstream out(stage.out / "run_meta.json", std::ios::binary | std::ios::trunc);
    out << meta.dump(2) << '\n';
}

EvalReport core_run(Stage& stage, const std::vector<Variant>& variants, int n_encoders) {
    const auto t0 = std::chrono::steady_clock::now();
    load_and_split(stage);

    EvalReport report;
    report.config_digest = config_digest(stage.cfg);
    report.hourly = hourly_stats(stage.records);

    if (std::count(variants.begin(), variants.end(), Variant::LlmFewShot) > 0)
        report.rows.push_back(fewshot_row(stage, report));

    // first reasoning variant feeds the dossiers
    Variant dossier_variant = Variant::Baseline;
    for (Variant v : variants) {
        if (v != Variant::Baseline && v != Variant::LlmFewShot) {
            dossier_variant = v;
            break;
        }
    }

    fs::create_directories(stage.out / "models");
    for (int e = 0; e < n_encoders; ++e) {
        Encoder& enc = stage.encoder(e);

        std::map<Variant, std::unordered_map<std::string, Rationale>> rationale_sets;
        std::map<Variant, DesignMatrix> matrices;
        for (Variant variant : variants) {
            if (variant == Variant::LlmFewShot) continue;
            const std::unordered_map<std::string, Rationale>* rset = nullptr;
            if (variant != Variant::Baseline) {
                rationale_sets[variant] = ensure_rationales(stage, variant);
                rset = &rationale_sets[variant];
                if (e == 0) {
                    std::map<std::string, long> counts;
                    for (const auto& [id, rationale] : *rset)
                        ++counts[parse_status_name(rationale.status)];
                    for (const auto& [status, count] : counts)
                        report.parse_status_counts[std::string(variant_name(variant)) + ":" +
                                                   status] = count;
                }
            }
            matrices[variant] = ensure_embeddings(stage, variant, enc, rset);
        }

        const int n_train = static_cast<int>(stage.n_train);
        const int n_all = static_cast<int>(stage.ordered.size());
        for (RegressorKind kind : stage.cfg.regressors) {
            for (Variant variant : variants) {
                if (variant == Variant::LlmFewShot) continue;
                const DesignMatrix& X_all = matrices[variant];
                DesignMatrix X_train = slice_rows(X_all, 0, n_train);
                DesignMatrix X_test = slice_rows(X_all, n_train, n_all);

                SearchSpace space = search_space_for(stage.cfg, kind);
                SearchResult search =
                    random_search(space, stage.cfg.n_iter, stage.cfg.folds, X_train,
                                  stage.y_train, kind, derived_seed(stage.cfg.seed, kind, variant));
                search.model.encoder_id = enc.id();
                const std::string model_path =
                    (stage.out / "models" /
                     (std::string(regressor_kind_name(kind)) + "." + variant_name(variant) + "." +
                      sanitize_filename(enc.id()) + ".json"))
                        .string();
                save_model(search.model, model_path);

                std::vector<double> pred = predict(search.model, X_test);
                ReportRow row;
                row.group = regressor_kind_name(kind);
                row.variant = variant_name(variant);
                row.encoder_id = enc.id();
                row.result = evaluate_predictions(pred, stage.y_test);
                report.rows.push_back(row);

                if (e == 0 && stage.cfg.dossier_count > 0 && variant == dossier_variant &&
                    kind == stage.cfg.regressors.front() && report.dossiers.empty() &&
                    variant != Variant::Baseline) {
                    const auto& rset = rationale_sets.at(variant);
                    const int count =
                        std::min(stage.cfg.dossier_count, n_all - n_train);
                    for (int i = 0; i < count; ++i) {
                        const auto* rec = stage.ordered[static_cast<size_t>(n_train + i)];
                        report.dossiers.push_back({rec->id, rec->text, rec->posting_time,
                                                   stage.y_test[static_cast<size_t>(i)],
                                                   pred[static_cast<size_t>(i)],
                                                   rset.at(rec->id)});
                    }
                }
            }
        }
    }

    attach_improvements(report);

    {
        std::ofstream out(stage.out / "report.json", std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write report.json under " + stage.out.string());
        out << report_to_json(report).dump(2) << '\n';
    }
    emit_report(report, stage.out.string());

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_meta(stage, elapsed);
    return report;
}

}  // namespace

EvalReport run_pipeline(const ExperimentConfig& config, const RunHooks& hooks) {
    Stage stage(config, hooks);
    return core_run(stage, config.variants, 1);
}

EvalReport run_ablation(const ExperimentConfig& config, const RunHooks& hooks) {
    Stage stage(config, hooks);
    const std::vector<Variant> variants{Variant::Baseline, Variant::TopicOnly,
                                        Variant::AudienceOnly, Variant::TimeOnly,
                                        Variant::FullReasoning};
    return core_run(stage, variants, 1);
}

EvalReport run_encoder_comparison(const ExperimentConfig& config, const RunHooks& hooks) {
    if (!config.encoder2 && !hooks.encoder2)
        throw ConfigError("encoder comparison requires an [encoder2] section");
    Stage stage(config, hooks);
    return core_run(stage, {Variant::Baseline}, 2);
}

EvalReport run_llm_baseline(const ExperimentConfig& config, const RunHooks& hooks) {
    Stage stage(config, hooks);
    const auto t0 = std::chrono::steady_clock::now();
    load_and_split(stage);

    EvalReport report;
    report.config_digest = config_digest(stage.cfg);
    report.hourly = hourly_stats(stage.records);
    report.rows.push_back(fewshot_row(stage, report));

    {
        std::ofstream out(stage.out / "report.json", std::ios::binary | std::ios::trunc);
        out << report_to_json(report).dump(2) << '\n';
    }
    emit_report(report, stage.out.string());
    write_run_meta(stage,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return report;
}

ParseReport stage_ingest(const ExperimentConfig& config) {
    if (config.dataset.empty()) throw ConfigError("data.dataset is not set");
    ParseReport report = load_dataset(config.dataset);
    fs::create_directories(config.out_dir);
    json issues = json::array();
    for (const auto& e : report.errors) issues.push_back({{"line", e.line}, {"error", e.message}});
    json warnings = json::array();
    for (const auto& w : report.warnings)
        warnings.push_back({{"line", w.line}, {"warning", w.message}});
    json j{{"records", report.records.size()}, {"errors", issues}, {"warnings", warnings}};
    std::ofstream out(fs::path(config.out_dir) / "ingest_report.json",
                      std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    return report;
}

TemporalSplit stage_split(const ExperimentConfig& config) {
    Stage stage(config, {});
    load_and_split(stage);
    return stage.split;
}

void stage_reason(const ExperimentConfig& config, const RunHooks& hooks) {
    Stage stage(config, hooks);
    load_and_split(stage);
    for (Variant variant : config.variants) {
        if (variant == Variant::Baseline || variant == Variant::LlmFewShot) continue;
        ensure_rationales(stage, variant);
    }
}

void stage_encode(const ExperimentConfig& config, const RunHooks& hooks) {
    Stage stage(config, hooks);
    load_and_split(stage);
    for (Variant variant : config.variants) {
        if (variant == Variant::LlmFewShot) continue;
        std::unordered_map<std::string, Rationale> rset;
        const std::unordered_map<std::string, Rationale>* rptr = nullptr;
        if (variant != Variant::Baseline) {
            rset = ensure_rationales(stage, variant);
            rptr = &rset;
        }
        ensure_embeddings(stage, variant, stage.encoder(0), rptr);
    }
}

void stage_train(const ExperimentConfig& config, const RunHooks& hooks) {
    Stage stage(config, hooks);
    load_and_split(stage);
    fs::create_directories(stage.out / "models");
    for (Variant variant : config.variants) {
        if (variant == Variant::LlmFewShot) continue;
        std::unordered_map<std::string, Rationale> rset;
        const std::unordered_map<std::string, Rationale>* rptr = nullptr;
        if (variant != Variant::Baseline) {
            rset = ensure_rationales(stage, variant);
            rptr = &rset;
        }
        Encoder& enc = stage.encoder(0);
        DesignMatrix X_all = ensure_embeddings(stage, variant, enc, rptr);
        DesignMatrix X_train = slice_rows(X_all, 0, static_cast<int>(stage.n_train));
        for (RegressorKind kind : config.regressors) {
            SearchSpace space = search_space_for(config, kind);
            SearchResult search = random_search(space, config.n_iter, config.folds, X_train,
                                                stage.y_train, kind,
                                                derived_seed(config.seed, kind, variant));
            search.model.encoder_id = enc.id();
            save_model(search.model,
                       (stage.out / "models" /
                        (std::string(regressor_kind_name(kind)) + "." + variant_name(variant) +
                         "." + sanitize_filename(enc.id()) + ".json"))
                           .string());
        }
    }
}

}  // namespace buzz
