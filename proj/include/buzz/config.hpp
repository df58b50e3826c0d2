#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "buzz/regress.hpp"

namespace buzz {

struct ProviderSpec {
    enum class Kind { Mock, Http };
    Kind kind = Kind::Mock;
    std::string endpoint = "https://api.openai.com/v1";
    std::string model = "gpt-4o";
    double temperature = 0.0;
    int max_tokens = 512;
    int concurrency = 4;
    double rate_per_sec = 0.0;  // 0 = unlimited
    int retry_max_attempts = 5;
    int retry_base_ms = 1000;
    std::string mock_script = "rationale";  // rationale | fixed | fail
    std::string mock_fixed_text;
    std::string mock_topic_map;  // path to a {token: topic} JSON file

    bool operator==(const ProviderSpec&) const = default;
};

struct EncoderSpec {
    enum class Kind { Hashing, Precomputed, Remote };
    Kind kind = Kind::Hashing;
    int dim = 768;
    int ngram_min = 2;
    int ngram_max = 4;
    std::string path;      // precomputed store manifest
    std::string endpoint;  // remote embeddings endpoint
    std::string model;     // remote embeddings model

    bool operator==(const EncoderSpec&) const = default;
};

enum class Variant { Baseline, FullReasoning, TopicOnly, AudienceOnly, TimeOnly, LlmFewShot };

const char* variant_name(Variant variant);
Variant variant_from_name(const std::string& name);

struct ExperimentConfig {
    std::string dataset;
    double split_fraction = 0.8;
    uint64_t seed = 42;
    std::string out_dir = "out";
    std::string cache_dir;  // empty -> {out_dir}/cache
    std::vector<RegressorKind> regressors = {RegressorKind::Gbdt};
    std::vector<Variant> variants = {Variant::Baseline, Variant::FullReasoning};
    int n_iter = 30;
    int folds = 3;
    int fewshot_buckets = 3;
    int dossier_count = 0;
    EncoderSpec encoder;
    std::optional<EncoderSpec> encoder2;  // second backend for `encoders`
    ProviderSpec provider;
    // "gbdt.learning_rate" -> distribution; replaces the default-space entry
    std::map<std::string, ParamDist> space_overrides;

    std::string resolved_cache_dir() const;
    bool operator==(const ExperimentConfig&) const = default;
};

// Flat key-value sections ("key = value" under "[section]", '#' comments).
std::map<std::string, std::string> parse_flat_config(std::istream& in);

ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_flat(const std::map<std::string, std::string>& entries);
std::string save_config_string(const ExperimentConfig& config);  // canonical round-trip form
void save_config(const ExperimentConfig& config, const std::string& path);

// SHA-256 of the canonical form; stamped into every report.
std::string config_digest(const ExperimentConfig& config);

// Search space for a regressor with the config's overrides applied.
SearchSpace search_space_for(const ExperimentConfig& config, RegressorKind kind);

}  // namespace buzz
