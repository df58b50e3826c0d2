#include "buzz/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "buzz/digest.hpp"
#include "buzz/errors.hpp"

namespace buzz {

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

double to_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' has non-numeric value '" + value + "'");
    }
}

long long to_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' has non-integer value '" + value + "'");
    }
}

std::string format_double(double v) {
    if (v == static_cast<long long>(v)) return std::to_string(static_cast<long long>(v));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

ParamDist parse_dist(const std::string& key, const std::string& value) {
    auto colon = value.find(':');
    if (colon == std::string::npos)
        throw ConfigError("search override '" + key + "' must look like kind:args, got '" + value +
                          "'");
    const std::string kind = trim(value.substr(0, colon));
    const auto args = split_list(value.substr(colon + 1));
    ParamDist dist;
    if (kind == "cat") {
        dist.kind = DistKind::Categorical;
        for (const auto& a : args) dist.values.push_back(to_double(key, a));
        if (dist.values.empty()) throw ConfigError("empty categorical set for '" + key + "'");
        return dist;
    }
    if (args.size() != 2)
        throw ConfigError("search override '" + key + "' needs two bounds, got '" + value + "'");
    dist.lo = to_double(key, args[0]);
    dist.hi = to_double(key, args[1]);
    if (kind == "int")
        dist.kind = DistKind::Int;
    else if (kind == "real")
        dist.kind = DistKind::Real;
    else if (kind == "log")
        dist.kind = DistKind::LogReal;
    else
        throw ConfigError("unknown distribution kind '" + kind + "' for '" + key + "'");
    return dist;
}

std::string dist_to_string(const ParamDist& dist) {
    switch (dist.kind) {
        case DistKind::Int: return "int:" + format_double(dist.lo) + "," + format_double(dist.hi);
        case DistKind::Real: return "real:" + format_double(dist.lo) + "," + format_double(dist.hi);
        case DistKind::LogReal:
            return "log:" + format_double(dist.lo) + "," + format_double(dist.hi);
        case DistKind::Categorical: {
            std::string out = "cat:";
            for (size_t i = 0; i < dist.values.size(); ++i) {
                if (i) out += ",";
                out += format_double(dist.values[i]);
            }
            return out;
        }
    }
    return "";
}

EncoderSpec encoder_from_flat(const std::map<std::string, std::string>& entries,
                              const std::string& section) {
    EncoderSpec spec;
    auto get = [&](const char* key) -> std::optional<std::string> {
        auto it = entries.find(section + "." + key);
        if (it == entries.end()) return std::nullopt;
        return it->second;
    };
    if (auto v = get("kind")) {
        if (*v == "hashing")
            spec.kind = EncoderSpec::Kind::Hashing;
        else if (*v == "precomputed")
            spec.kind = EncoderSpec::Kind::Precomputed;
        else if (*v == "remote")
            spec.kind = EncoderSpec::Kind::Remote;
        else
            throw ConfigError("unknown encoder kind '" + *v + "'");
    }
    if (auto v = get("dim")) spec.dim = static_cast<int>(to_int(section + ".dim", *v));
    if (auto v = get("ngram_min")) spec.ngram_min = static_cast<int>(to_int(section + ".ngram_min", *v));
    if (auto v = get("ngram_max")) spec.ngram_max = static_cast<int>(to_int(section + ".ngram_max", *v));
    if (auto v = get("path")) spec.path = *v;
    if (auto v = get("endpoint")) spec.endpoint = *v;
    if (auto v = get("model")) spec.model = *v;
    if (spec.dim < 1) throw ConfigError("encoder dim must be >= 1");
    return spec;
}

const char* encoder_kind_name(EncoderSpec::Kind kind) {
    switch (kind) {
        case EncoderSpec::Kind::Hashing: return "hashing";
        case EncoderSpec::Kind::Precomputed: return "precomputed";
        case EncoderSpec::Kind::Remote: return "remote";
    }
    return "?";
}

void write_encoder(std::ostringstream& out, const EncoderSpec& spec, const std::string& section) {
    out << "[" << section << "]\n";
    out << "kind = " << encoder_kind_name(spec.kind) << "\n";
    out << "dim = " << spec.dim << "\n";
    out << "ngram_min = " << spec.ngram_min << "\n";
    out << "ngram_max = " << spec.ngram_max << "\n";
    if (!spec.path.empty()) out << "path = " << spec.path << "\n";
    if (!spec.endpoint.empty()) out << "endpoint = " << spec.endpoint << "\n";
    if (!spec.model.empty()) out << "model = " << spec.model << "\n";
    out << "\n";
}

}  // namespace

const char* variant_name(Variant variant) {
    switch (variant) {
        case Variant::Baseline: return "baseline";
        case Variant::FullReasoning: return "full_reasoning";
        case Variant::TopicOnly: return "topic_only";
        case Variant::AudienceOnly: return "audience_only";
        case Variant::TimeOnly: return "time_only";
        case Variant::LlmFewShot: return "llm_fewshot";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : {Variant::Baseline, Variant::FullReasoning, Variant::TopicOnly,
                      Variant::AudienceOnly, Variant::TimeOnly, Variant::LlmFewShot}) {
        if (name == variant_name(v)) return v;
    }
    throw ConfigError("unknown variant '" + name + "'");
}

std::string ExperimentConfig::resolved_cache_dir() const {
    return cache_dir.empty() ? out_dir + "/cache" : cache_dir;
}

std::map<std::string, std::string> parse_flat_config(std::istream& in) {
    std::map<std::string, std::string> entries;
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        entries[section.empty() ? key : section + "." + key] = value;
    }
    return entries;
}

ExperimentConfig config_from_flat(const std::map<std::string, std::string>& entries) {
    ExperimentConfig cfg;
    auto get = [&](const char* key) -> std::optional<std::string> {
        auto it = entries.find(key);
        if (it == entries.end()) return std::nullopt;
        return it->second;
    };

    if (auto v = get("data.dataset")) cfg.dataset = *v;
    if (auto v = get("data.split_fraction")) cfg.split_fraction = to_double("data.split_fraction", *v);
    if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
        throw ConfigError("data.split_fraction must lie in (0,1)");

    if (auto v = get("run.seed")) cfg.seed = static_cast<uint64_t>(to_int("run.seed", *v));
    if (auto v = get("run.out")) cfg.out_dir = *v;
    if (auto v = get("run.cache_dir")) cfg.cache_dir = *v;
    if (auto v = get("run.n_iter")) cfg.n_iter = static_cast<int>(to_int("run.n_iter", *v));
    if (auto v = get("run.folds")) cfg.folds = static_cast<int>(to_int("run.folds", *v));
    if (auto v = get("run.fewshot_buckets"))
        cfg.fewshot_buckets = static_cast<int>(to_int("run.fewshot_buckets", *v));
    if (auto v = get("run.dossiers")) cfg.dossier_count = static_cast<int>(to_int("run.dossiers", *v));
    if (cfg.n_iter < 1) throw ConfigError("run.n_iter must be >= 1");
    if (cfg.folds < 2) throw ConfigError("run.folds must be >= 2");

    if (auto v = get("run.regressors")) {
        cfg.regressors.clear();
        for (const auto& name : split_list(*v)) cfg.regressors.push_back(regressor_kind_from_name(name));
        if (cfg.regressors.empty()) throw ConfigError("run.regressors is empty");
    }
    if (auto v = get("run.variants")) {
        cfg.variants.clear();
        for (const auto& name : split_list(*v)) cfg.variants.push_back(variant_from_name(name));
        if (cfg.variants.empty()) throw ConfigError("run.variants is empty");
    }

    if (auto v = get("provider.kind")) {
        if (*v == "mock")
            cfg.provider.kind = ProviderSpec::Kind::Mock;
        else if (*v == "http")
            cfg.provider.kind = ProviderSpec::Kind::Http;
        else
            throw ConfigError("provider.kind must be mock or http, got '" + *v + "'");
    }
    if (auto v = get("provider.endpoint")) cfg.provider.endpoint = *v;
    if (auto v = get("provider.model")) cfg.provider.model = *v;
    if (auto v = get("provider.temperature"))
        cfg.provider.temperature = to_double("provider.temperature", *v);
    if (auto v = get("provider.max_tokens"))
        cfg.provider.max_tokens = static_cast<int>(to_int("provider.max_tokens", *v));
    if (auto v = get("provider.concurrency"))
        cfg.provider.concurrency = static_cast<int>(to_int("provider.concurrency", *v));
    if (auto v = get("provider.rate_per_sec"))
        cfg.provider.rate_per_sec = to_double("provider.rate_per_sec", *v);
    if (auto v = get("provider.retry_max_attempts"))
        cfg.provider.retry_max_attempts = static_cast<int>(to_int("provider.retry_max_attempts", *v));
    if (auto v = get("provider.retry_base_ms"))
        cfg.provider.retry_base_ms = static_cast<int>(to_int("provider.retry_base_ms", *v));
    if (auto v = get("provider.mock_script")) cfg.provider.mock_script = *v;
    if (auto v = get("provider.mock_fixed_text")) cfg.provider.mock_fixed_text = *v;
    if (auto v = get("provider.mock_topic_map")) cfg.provider.mock_topic_map = *v;

    bool has_encoder = false, has_encoder2 = false;
    for (const auto& [key, value] : entries) {
        if (key.rfind("encoder.", 0) == 0) has_encoder = true;
        if (key.rfind("encoder2.", 0) == 0) has_encoder2 = true;
        (void)value;
    }
    if (has_encoder) cfg.encoder = encoder_from_flat(entries, "encoder");
    if (has_encoder2) cfg.encoder2 = encoder_from_flat(entries, "encoder2");

    for (const auto& [key, value] : entries) {
        if (key.rfind("search.", 0) != 0) continue;
        const std::string rest = key.substr(7);  // "<kind>.<param>"
        auto dot = rest.find('.');
        if (dot == std::string::npos)
            throw ConfigError("search override key must be search.<regressor>.<param>: " + key);
        regressor_kind_from_name(rest.substr(0, dot));  // validates
        cfg.space_overrides[rest] = parse_dist(key, value);
    }

    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return config_from_flat(parse_flat_config(in));
}

std::string save_config_string(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[data]\n";
    out << "dataset = " << cfg.dataset << "\n";
    out << "split_fraction = " << format_double(cfg.split_fraction) << "\n\n";

    out << "[run]\n";
    out << "seed = " << cfg.seed << "\n";
    out << "out = " << cfg.out_dir << "\n";
    if (!cfg.cache_dir.empty()) out << "cache_dir = " << cfg.cache_dir << "\n";
    out << "regressors = ";
    for (size_t i = 0; i < cfg.regressors.size(); ++i) {
        if (i) out << ",";
        out << regressor_kind_name(cfg.regressors[i]);
    }
    out << "\n";
    out << "variants = ";
    for (size_t i = 0; i < cfg.variants.size(); ++i) {
        if (i) out << ",";
        out << variant_name(cfg.variants[i]);
    }
    out << "\n";
    out << "n_iter = " << cfg.n_iter << "\n";
    out << "folds = " << cfg.folds << "\n";
    out << "fewshot_buckets = " << cfg.fewshot_buckets << "\n";
    out << "dossiers = " << cfg.dossier_count << "\n\n";

    out << "[provider]\n";
    out << "kind = " << (cfg.provider.kind == ProviderSpec::Kind::Mock ? "mock" : "http") << "\n";
    out << "endpoint = " << cfg.provider.endpoint << "\n";
    out << "model = " << cfg.provider.model << "\n";
    out << "temperature = " << format_double(cfg.provider.temperature) << "\n";
    out << "max_tokens = " << cfg.provider.max_tokens << "\n";
    out << "concurrency = " << cfg.provider.concurrency << "\n";
    out << "rate_per_sec = " << format_double(cfg.provider.rate_per_sec) << "\n";
    out << "retry_max_attempts = " << cfg.provider.retry_max_attempts << "\n";
    out << "retry_base_ms = " << cfg.provider.retry_base_ms << "\n";
    out << "mock_script = " << cfg.provider.mock_script << "\n";
    if (!cfg.provider.mock_fixed_text.empty())
        out << "mock_fixed_text = " << cfg.provider.mock_fixed_text << "\n";
    if (!cfg.provider.mock_topic_map.empty())
        out << "mock_topic_map = " << cfg.provider.mock_topic_map << "\n";
    out << "\n";

    write_encoder(out, cfg.encoder, "encoder");
    if (cfg.encoder2) write_encoder(out, *cfg.encoder2, "encoder2");

    if (!cfg.space_overrides.empty()) {
        // one section per regressor, keys sorted by the map ordering
        std::string current_section;
        for (const auto& [key, dist] : cfg.space_overrides) {
            auto dot = key.find('.');
            const std::string section = "search." + key.substr(0, dot);
            if (section != current_section) {
                if (!current_section.empty()) out << "\n";
                out << "[" << section << "]\n";
                current_section = section;
            }
            out << key.substr(dot + 1) << " = " << dist_to_string(dist) << "\n";
        }
        out << "\n";
    }
    return out.str();
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write config file: " + path);
    out << save_config_string(cfg);
}

std::string config_digest(const ExperimentConfig& cfg) {
    return sha256_hex(save_config_string(cfg));
}

SearchSpace search_space_for(const ExperimentConfig& cfg, RegressorKind kind) {
    SearchSpace space = default_search_space(kind);
    const std::string prefix = std::string(regressor_kind_name(kind)) + ".";
    for (const auto& [key, dist] : cfg.space_overrides) {
        if (key.rfind(prefix, 0) != 0) continue;
        const std::string name = key.substr(prefix.size());
        bool replaced = false;
        for (auto& [existing, d] : space) {
            if (existing == name) {
                d = dist;
                replaced = true;
                break;
            }
        }
        if (!replaced) space.emplace_back(name, dist);
    }
    return space;
}

}  // namespace buzz
