#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "buzz/reasoning.hpp"
#include "buzz/timeutil.hpp"

namespace buzz {

struct AugmentedInput {
    std::string text;           // the full concatenated input
    std::string hashtag;        // original x, verbatim
    std::string time_rendered;  // "2024-...Z (Saturday, hour 19)"
    std::string reasoning;      // rationale raw text; empty for the baseline variant
};

// "HASHTAG: <x>\nTIME: <rendered t>\nREASONING: <r>"; the REASONING segment
// is omitted entirely when the rationale text is empty (baseline variant).
AugmentedInput augment(const std::string& hashtag, UtcSeconds posting_time,
                       const std::string& reasoning_raw);
AugmentedInput augment(const std::string& hashtag, UtcSeconds posting_time);
AugmentedInput augment(const std::string& hashtag, UtcSeconds posting_time, const Rationale& r);

struct EmbeddingVector {
    std::vector<double> values;
    std::string encoder_id;
};

class Encoder {
public:
    virtual ~Encoder() = default;
    virtual std::vector<double> encode_text(const std::string& text) = 0;
    virtual int dimension() const = 0;
    virtual std::string id() const = 0;
};

// Validates length and finiteness of whatever the backend produced.
EmbeddingVector encode(const AugmentedInput& input, Encoder& backend);

// Deterministic feature-hashing embedder over character n-grams (UTF-8 code
// units): index = mix64(fnv1a64(gram)) mod dim, sign from the top hash bit,
// accumulate, then L2-normalize (empty input stays the zero vector).
std::vector<double> hashing_encode(std::string_view text, int dim, int ngram_min = 2,
                                   int ngram_max = 4);

class HashingEncoder : public Encoder {
public:
    explicit HashingEncoder(int dim = 768, int ngram_min = 2, int ngram_max = 4);
    std::vector<double> encode_text(const std::string& text) override;
    int dimension() const override { return dim_; }
    std::string id() const override;

private:
    int dim_, ngram_min_, ngram_max_;
};

struct DesignMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;  // row-major

    double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
    std::span<const double> row(int r) const {
        return {values.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }
};

// Binary row-major f64 matrix plus a JSON manifest mapping content digests to
// byte offsets; the same digests key the remote-encoder cache.
void save_embedding_store(const DesignMatrix& matrix, const std::string& encoder_id,
                          const std::vector<std::string>& digests, const std::string& bin_path,
                          const std::string& manifest_path,
                          const std::string& truncation_policy = "none");

struct EmbeddingStore {
    DesignMatrix matrix;
    std::string encoder_id;
    std::vector<std::string> digests;
    std::string truncation_policy;
};

EmbeddingStore load_embedding_store(const std::string& manifest_path);

// Lookup-only backend over a saved embedding store; a digest miss is a hard
// error, never a silent zero vector.
class PrecomputedStore : public Encoder {
public:
    explicit PrecomputedStore(const std::string& manifest_path);
    std::vector<double> encode_text(const std::string& text) override;
    int dimension() const override;
    std::string id() const override { return store_.encoder_id; }

private:
    EmbeddingStore store_;
    std::vector<std::pair<std::string, int>> index_;  // sorted digest -> row
};

// OpenAI-compatible embeddings endpoint, cached on disk by text digest so n
// identical texts cause exactly one service call.
class RemoteEncoder : public Encoder {
public:
    RemoteEncoder(std::string endpoint, std::string api_key, std::string model, int dim,
                  std::string cache_root);
    std::vector<double> encode_text(const std::string& text) override;
    int dimension() const override { return dim_; }
    std::string id() const override { return "remote:" + model_; }
    long service_calls() const { return service_calls_; }

private:
    std::string endpoint_, api_key_, model_;
    int dim_;
    std::string cache_root_;
    long service_calls_ = 0;
};

// Row i is encode(inputs[i]); any single failure aborts the whole batch.
DesignMatrix batch_encode(const std::vector<AugmentedInput>& inputs, Encoder& backend);

}  // namespace buzz
