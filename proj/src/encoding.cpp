#include "buzz/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "buzz/digest.hpp"
#include "buzz/errors.hpp"

namespace buzz {

using nlohmann::json;

AugmentedInput augment(const std::string& hashtag, UtcSeconds posting_time,
                       const std::string& reasoning_raw) {
    AugmentedInput input;
    input.hashtag = hashtag;
    input.time_rendered = render_time_line(posting_time);
    input.reasoning = reasoning_raw;
    input.text = "HASHTAG: " + hashtag + "\nTIME: " + input.time_rendered;
    if (!reasoning_raw.empty()) input.text += "\nREASONING: " + reasoning_raw;
    return input;
}

AugmentedInput augment(const std::string& hashtag, UtcSeconds posting_time) {
    return augment(hashtag, posting_time, std::string());
}

AugmentedInput augment(const std::string& hashtag, UtcSeconds posting_time, const Rationale& r) {
    return augment(hashtag, posting_time, r.raw_text);
}

EmbeddingVector encode(const AugmentedInput& input, Encoder& backend) {
    EmbeddingVector v{backend.encode_text(input.text), backend.id()};
    if (static_cast<int>(v.values.size()) != backend.dimension())
        throw InternalError("encoder '" + backend.id() + "' produced " +
                            std::to_string(v.values.size()) + " values, expected " +
                            std::to_string(backend.dimension()));
    for (double x : v.values)
        if (!std::isfinite(x))
            throw DataError("encoder '" + backend.id() + "' produced a non-finite value");
    return v;
}

std::vector<double> hashing_encode(std::string_view text, int dim, int ngram_min, int ngram_max) {
    if (dim < 1) throw ConfigError("hashing encoder dimension must be >= 1");
    if (ngram_min < 1 || ngram_max < ngram_min)
        throw ConfigError("invalid n-gram range for hashing encoder");

    std::vector<double> v(static_cast<size_t>(dim), 0.0);
    const size_t n = text.size();
    for (int len = ngram_min; len <= ngram_max; ++len) {
        if (n < static_cast<size_t>(len)) break;
        for (size_t i = 0; i + len <= n; ++i) {
            uint64_t h = mix64(fnv1a64(text.substr(i, static_cast<size_t>(len))));
            size_t idx = static_cast<size_t>(h % static_cast<uint64_t>(dim));
            double sign = (h >> 63) ? 1.0 : -1.0;
            v[idx] += sign;
        }
    }
    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    if (norm_sq > 0.0) {
        const double norm = std::sqrt(norm_sq);
        for (double& x : v) x /= norm;
    }
    return v;
}

HashingEncoder::HashingEncoder(int dim, int ngram_min, int ngram_max)
    : dim_(dim), ngram_min_(ngram_min), ngram_max_(ngram_max) {
    if (dim < 1) throw ConfigError("hashing encoder dimension must be >= 1");
}

std::vector<double> HashingEncoder::encode_text(const std::string& text) {
    return hashing_encode(text, dim_, ngram_min_, ngram_max_);
}

std::string HashingEncoder::id() const {
    return "hashing-d" + std::to_string(dim_) + "-n" + std::to_string(ngram_min_) + "." +
           std::to_string(ngram_max_);
}

void save_embedding_store(const DesignMatrix& matrix, const std::string& encoder_id,
                          const std::vector<std::string>& digests, const std::string& bin_path,
                          const std::string& manifest_path, const std::string& truncation_policy) {
    if (static_cast<int>(digests.size()) != matrix.rows)
        throw InternalError("digest count does not match matrix rows");

    // write-then-rename so a crash never leaves a partial store behind
    const std::string bin_tmp = bin_path + ".tmp";
    {
        std::ofstream out(bin_tmp, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(matrix.values.data()),
                  static_cast<std::streamsize>(matrix.values.size() * sizeof(double)));
        if (!out) throw DataError("cannot write embedding matrix: " + bin_path);
    }
    json rows = json::array();
    for (int r = 0; r < matrix.rows; ++r) {
        rows.push_back({{"digest", digests[static_cast<size_t>(r)]},
                        {"offset", static_cast<int64_t>(r) * matrix.cols *
                                       static_cast<int64_t>(sizeof(double))}});
    }
    json manifest{{"encoder_id", encoder_id},
                  {"dim", matrix.cols},
                  {"rows", rows},
                  {"truncation_policy", truncation_policy}};
    const std::string man_tmp = manifest_path + ".tmp";
    {
        std::ofstream out(man_tmp, std::ios::binary | std::ios::trunc);
        out << manifest.dump(2) << '\n';
        if (!out) throw DataError("cannot write embedding manifest: " + manifest_path);
    }
    std::filesystem::rename(bin_tmp, bin_path);
    std::filesystem::rename(man_tmp, manifest_path);
}

EmbeddingStore load_embedding_store(const std::string& manifest_path) {
    std::ifstream min(manifest_path, std::ios::binary);
    if (!min) throw DataError("cannot open embedding manifest: " + manifest_path);
    json manifest = json::parse(min, nullptr, false);
    if (manifest.is_discarded()) throw DataError("embedding manifest is not JSON: " + manifest_path);

    EmbeddingStore store;
    store.encoder_id = manifest.at("encoder_id").get<std::string>();
    store.truncation_policy = manifest.value("truncation_policy", "none");
    store.matrix.cols = manifest.at("dim").get<int>();
    if (store.matrix.cols < 1) throw DataError("embedding manifest has invalid dim");

    // manifest "<name>.manifest.json" sits next to "<name>.bin"
    std::string base = manifest_path;
    const std::string suffix = ".manifest.json";
    if (base.size() > suffix.size() && base.substr(base.size() - suffix.size()) == suffix)
        base = base.substr(0, base.size() - suffix.size());
    const std::string data_path = base + ".bin";

    std::ifstream bin(data_path, std::ios::binary);
    if (!bin) throw DataError("cannot open embedding matrix: " + data_path);

    const auto& rows = manifest.at("rows");
    store.matrix.rows = static_cast<int>(rows.size());
    store.matrix.values.resize(static_cast<size_t>(store.matrix.rows) * store.matrix.cols);
    bin.read(reinterpret_cast<char*>(store.matrix.values.data()),
             static_cast<std::streamsize>(store.matrix.values.size() * sizeof(double)));
    if (bin.gcount() !=
        static_cast<std::streamsize>(store.matrix.values.size() * sizeof(double)))
        throw DataError("embedding matrix is shorter than its manifest: " + data_path);

    for (const auto& row : rows) store.digests.push_back(row.at("digest").get<std::string>());
    return store;
}

PrecomputedStore::PrecomputedStore(const std::string& manifest_path)
    : store_(load_embedding_store(manifest_path)) {
    index_.reserve(store_.digests.size());
    for (int r = 0; r < store_.matrix.rows; ++r)
        index_.emplace_back(store_.digests[static_cast<size_t>(r)], r);
    std::sort(index_.begin(), index_.end());
}

int PrecomputedStore::dimension() const { return store_.matrix.cols; }

std::vector<double> PrecomputedStore::encode_text(const std::string& text) {
    const std::string digest = sha256_hex(text);
    auto it = std::lower_bound(index_.begin(), index_.end(),
                               std::make_pair(digest, 0),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    if (it == index_.end() || it->first != digest)
        throw DataError("precomputed store is missing embedding for digest " + digest);
    auto row = store_.matrix.row(it->second);
    return {row.begin(), row.end()};
}

RemoteEncoder::RemoteEncoder(std::string endpoint, std::string api_key, std::string model,
                             int dim, std::string cache_root)
    : endpoint_(std::move(endpoint)),
      api_key_(std::move(api_key)),
      model_(std::move(model)),
      dim_(dim),
      cache_root_(std::move(cache_root)) {
    std::filesystem::create_directories(cache_root_);
}

std::vector<double> RemoteEncoder::encode_text(const std::string& text) {
    const std::string digest = sha256_hex(model_ + "\n" + text);
    const auto dir = std::filesystem::path(cache_root_) / digest.substr(0, 2);
    const auto path = dir / (digest + ".json");

    if (std::filesystem::exists(path)) {
        std::ifstream in(path, std::ios::binary);
        json entry = json::parse(in, nullptr, false);
        if (!entry.is_discarded() && entry.contains("embedding"))
            return entry["embedding"].get<std::vector<double>>();
        std::error_code ec;
        std::filesystem::remove(path, ec);
    }

    auto scheme_end = endpoint_.find("://");
    size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = endpoint_.find('/', host_start);
    std::string base = path_start == std::string::npos ? endpoint_ : endpoint_.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : endpoint_.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client client(base);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    json body{{"model", model_}, {"input", text}};
    ++service_calls_;
    auto res = client.Post(prefix + "/embeddings", headers, body.dump(), "application/json");
    if (!res) throw ProviderError("embeddings transport failure: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw ProviderError("embeddings endpoint returned HTTP " + std::to_string(res->status) +
                                ": " + res->body.substr(0, 200),
                            res->status);
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("data") || !parsed["data"].is_array() ||
        parsed["data"].empty() || !parsed["data"][0].contains("embedding"))
        throw ProviderError("protocol error: embeddings response lacks data[0].embedding");
    auto values = parsed["data"][0]["embedding"].get<std::vector<double>>();
    if (static_cast<int>(values.size()) != dim_)
        throw DataError("embeddings endpoint returned dimension " +
                        std::to_string(values.size()) + ", expected " + std::to_string(dim_));

    std::filesystem::create_directories(dir);
    const auto tmp = dir / (digest + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << json{{"embedding", values}}.dump();
    }
    std::filesystem::rename(tmp, path);
    return values;
}

DesignMatrix batch_encode(const std::vector<AugmentedInput>& inputs, Encoder& backend) {
    DesignMatrix matrix;
    matrix.rows = static_cast<int>(inputs.size());
    matrix.cols = backend.dimension();
    matrix.values.reserve(static_cast<size_t>(matrix.rows) * matrix.cols);
    for (size_t i = 0; i < inputs.size(); ++i) {
        EmbeddingVector v;
        try {
            v = encode(inputs[i], backend);
        } catch (const Error& e) {
            throw DataError("batch encode failed at input " + std::to_string(i) + ": " + e.what());
        }
        matrix.values.insert(matrix.values.end(), v.values.begin(), v.values.end());
    }
    return matrix;
}

}  // namespace buzz
