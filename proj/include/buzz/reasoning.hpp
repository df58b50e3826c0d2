#pragma once

#include <array>
#include <string>
#include <vector>

#include "buzz/core_data.hpp"
#include "buzz/llm_client.hpp"

namespace buzz {

enum class Dimension { TopicCategory, TargetAudience, PostingTime };

inline constexpr std::array<Dimension, 3> kAllDimensions{
    Dimension::TopicCategory, Dimension::TargetAudience, Dimension::PostingTime};

// "TOPIC_CATEGORY", "TARGET_AUDIENCE", "POSTING_TIME"
const char* dimension_label(Dimension dim);

struct DimensionRationale {
    Dimension dimension = Dimension::TopicCategory;
    std::string prediction;
    std::string explanation;

    bool operator==(const DimensionRationale&) const = default;
};

enum class ParseStatus { Ok, Partial, Failed };
const char* parse_status_name(ParseStatus status);

struct Rationale {
    std::vector<DimensionRationale> per_dimension;  // unique dimensions, 0..3
    std::string summary;
    std::string raw_text;  // verbatim LLM output, always present
    ParseStatus status = ParseStatus::Failed;
};

struct PromptOptions {
    std::string model = "mock";
    double temperature = 0.0;
    int max_tokens = 512;
};

inline constexpr const char* kRationaleTemplateVersion = "rationale-v1";
inline constexpr const char* kFewshotTemplateVersion = "fewshot-v1";

// Prompt asking for a labeled PREDICTION/EXPLANATION pair per requested
// dimension plus a SUMMARY line. Depends only on (text, posting_time); the
// record's view count is never rendered.
ChatRequest build_rationale_prompt(const HashtagRecord& record,
                                   const std::vector<Dimension>& dims,
                                   const PromptOptions& options = {});
ChatRequest build_rationale_prompt(const HashtagRecord& record,
                                   const PromptOptions& options = {});

// Lenient label-grammar parse. Never fails hard: on any shortfall the result
// keeps raw_text and records what was missing via status.
Rationale parse_rationale(const std::string& llm_output);

// build prompt -> provider -> parse. Provider errors carry the record id.
Rationale generate_rationale(const HashtagRecord& record, Provider& provider,
                             const std::vector<Dimension>& dims,
                             const PromptOptions& options = {});

struct FewshotDemo {
    std::string text;
    UtcSeconds posting_time = 0;
    double log_view = 0.0;
};

// Few-shot numeric prediction prompt: range-constrained scalar output with
// one demonstration per view-level bucket. Demos must come from the train
// split only.
ChatRequest build_fewshot_prompt(const HashtagRecord& record,
                                 const std::vector<FewshotDemo>& demos, double range_min,
                                 double range_max, const PromptOptions& options = {});

struct NumericPrediction {
    double value = 0.0;
    bool clamped = false;
    std::string raw_text;
};

// First decimal number in the output, clamped into [range_min, range_max].
// Throws ExtractionError when no numeric token exists.
NumericPrediction extract_numeric(const std::string& llm_output, double range_min,
                                  double range_max);

struct RationaleEntry {
    std::string id;
    Rationale rationale;
    std::string template_version;
    std::string model;
};

// Line-delimited store so rationales are generated once and reused across
// regressor configurations.
void save_rationale_store(const std::vector<RationaleEntry>& entries, const std::string& path);
std::vector<RationaleEntry> load_rationale_store(const std::string& path);

}  // namespace buzz
