#include "buzz/reasoning.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "buzz/errors.hpp"

namespace buzz {

using nlohmann::json;

const char* dimension_label(Dimension dim) {
    switch (dim) {
        case Dimension::TopicCategory: return "TOPIC_CATEGORY";
        case Dimension::TargetAudience: return "TARGET_AUDIENCE";
        case Dimension::PostingTime: return "POSTING_TIME";
    }
    return "?";
}

const char* parse_status_name(ParseStatus status) {
    switch (status) {
        case ParseStatus::Ok: return "ok";
        case ParseStatus::Partial: return "partial";
        case ParseStatus::Failed: return "failed";
    }
    return "?";
}

namespace {

const char* dimension_description(Dimension dim) {
    switch (dim) {
        case Dimension::TopicCategory:
            return "TOPIC_CATEGORY: what the hashtag is about and how viral that kind of topic "
                   "tends to be";
        case Dimension::TargetAudience:
            return "TARGET_AUDIENCE: which user segments the hashtag speaks to and how broadly "
                   "it resonates";
        case Dimension::PostingTime:
            return "POSTING_TIME: whether the posting slot helps or hurts visibility given user "
                   "activity patterns";
    }
    return "";
}

}  // namespace

ChatRequest build_rationale_prompt(const HashtagRecord& record,
                                   const std::vector<Dimension>& dims,
                                   const PromptOptions& options) {
    if (dims.empty()) throw ConfigError("rationale prompt needs at least one dimension");

    std::ostringstream sys;
    sys << "You are a social media analyst. Given a hashtag and its posting time, reason about "
           "how popular it will become.\n";
    sys << "Consider the following dimension" << (dims.size() > 1 ? "s" : "") << ":\n";
    for (Dimension d : dims) sys << "- " << dimension_description(d) << "\n";
    sys << "For each dimension output exactly two lines:\n";
    for (Dimension d : dims) {
        sys << dimension_label(d) << " PREDICTION: <your prediction>\n";
        sys << dimension_label(d) << " EXPLANATION: <its expected impact on popularity>\n";
    }
    sys << "Then finish with one line:\n";
    sys << "SUMMARY: <overall popularity outlook>\n";
    sys << "[template " << kRationaleTemplateVersion;
    if (dims.size() < kAllDimensions.size()) {
        sys << "/";
        for (size_t i = 0; i < dims.size(); ++i) {
            if (i) sys << "+";
            sys << dimension_label(dims[i]);
        }
    }
    sys << "]";

    std::ostringstream user;
    user << "HASHTAG: " << record.text << "\n";
    user << "TIME: " << render_time_line(record.posting_time);

    ChatRequest request;
    request.model = options.model;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.messages = {{"system", sys.str()}, {"user", user.str()}};
    return request;
}

ChatRequest build_rationale_prompt(const HashtagRecord& record, const PromptOptions& options) {
    return build_rationale_prompt(
        record, {kAllDimensions.begin(), kAllDimensions.end()}, options);
}

namespace {

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

struct LabelMatch {
    std::optional<Dimension> dimension;  // nullopt for SUMMARY
    bool is_prediction = false;
    std::string value;
};

// Matches "DIMENSION PREDICTION: value", "DIMENSION EXPLANATION: value" or
// "SUMMARY: value", case-insensitively; '_' and ' ' are interchangeable in
// the dimension word.
std::optional<LabelMatch> match_label_line(const std::string& line) {
    std::string u = upper(line);
    std::replace(u.begin(), u.end(), ' ', '_');
    size_t colon = line.find(':');
    if (colon == std::string::npos) return std::nullopt;
    std::string head = u.substr(0, colon);
    while (!head.empty() && (head.front() == '_' || head.front() == '-')) head.erase(0, 1);
    while (!head.empty() && (head.back() == '_' || head.back() == '-')) head.pop_back();

    LabelMatch m;
    m.value = trim(line.substr(colon + 1));
    if (head == "SUMMARY") return m;

    for (Dimension d : kAllDimensions) {
        std::string label = dimension_label(d);
        for (const char* field : {"PREDICTION", "EXPLANATION"}) {
            if (head == label + ("_" + std::string(field))) {
                m.dimension = d;
                m.is_prediction = std::string(field) == "PREDICTION";
                return m;
            }
        }
    }
    return std::nullopt;
}

}  // namespace

Rationale parse_rationale(const std::string& llm_output) {
    Rationale r;
    r.raw_text = llm_output;

    struct Slot {
        std::optional<std::string> prediction, explanation;
    };
    std::array<Slot, 3> slots;
    std::optional<std::string> summary;

    // The value of a label continues across following unlabeled lines.
    std::string* open_value = nullptr;
    std::istringstream in(llm_output);
    std::string line;
    while (std::getline(in, line)) {
        auto m = match_label_line(line);
        if (!m) {
            if (open_value && !trim(line).empty()) {
                *open_value += "\n" + trim(line);
            }
            continue;
        }
        if (!m->dimension) {
            if (!summary) {
                summary = m->value;
                open_value = &*summary;
            } else {
                open_value = nullptr;  // duplicate SUMMARY ignored
            }
            continue;
        }
        Slot& slot = slots[static_cast<size_t>(*m->dimension)];
        auto& field = m->is_prediction ? slot.prediction : slot.explanation;
        if (!field) {
            field = m->value;
            open_value = &*field;
        } else {
            open_value = nullptr;  // duplicate label ignored, first occurrence kept
        }
    }

    bool any = summary.has_value();
    bool all = summary.has_value() && !trim(summary.value_or("")).empty();
    for (size_t i = 0; i < slots.size(); ++i) {
        const Slot& s = slots[i];
        if (s.prediction || s.explanation) any = true;
        if (s.prediction && !trim(*s.prediction).empty() && s.explanation &&
            !trim(*s.explanation).empty()) {
            r.per_dimension.push_back(
                {static_cast<Dimension>(i), *s.prediction, *s.explanation});
        } else {
            all = false;
        }
    }
    r.summary = summary.value_or("");
    r.status = all ? ParseStatus::Ok : (any ? ParseStatus::Partial : ParseStatus::Failed);
    return r;
}

Rationale generate_rationale(const HashtagRecord& record, Provider& provider,
                             const std::vector<Dimension>& dims, const PromptOptions& options) {
    ChatRequest request = build_rationale_prompt(record, dims, options);
    ChatResponse response;
    try {
        response = provider.complete(request);
    } catch (const ProviderError& e) {
        throw ProviderError("rationale generation failed for record '" + record.id +
                            "': " + e.what(), e.http_status());
    }
    return parse_rationale(response.content);
}

ChatRequest build_fewshot_prompt(const HashtagRecord& record,
                                 const std::vector<FewshotDemo>& demos, double range_min,
                                 double range_max, const PromptOptions& options) {
    if (demos.empty()) throw ConfigError("few-shot prompt requires at least one demonstration");
    if (!(range_min < range_max)) throw ConfigError("few-shot range must satisfy min < max");

    char lo[32], hi[32];
    std::snprintf(lo, sizeof(lo), "%g", range_min);
    std::snprintf(hi, sizeof(hi), "%g", range_max);

    std::ostringstream sys;
    sys << "You predict the popularity of social media hashtags as a log-scale view count.\n";
    sys << "Respond with a single number between " << lo << " and " << hi << ".\n";
    sys << "No words, no units, just the number.\n";
    sys << "[template " << kFewshotTemplateVersion << "]";

    std::ostringstream user;
    user << "Examples:\n";
    for (const auto& demo : demos) {
        user << "HASHTAG: " << demo.text << "\n";
        user << "TIME: " << render_time_line(demo.posting_time) << "\n";
        char v[32];
        std::snprintf(v, sizeof(v), "%g", demo.log_view);
        user << "LOG_VIEWS: " << v << "\n\n";
    }
    user << "Now the query:\n";
    user << "HASHTAG: " << record.text << "\n";
    user << "TIME: " << render_time_line(record.posting_time) << "\n";
    user << "LOG_VIEWS:";

    ChatRequest request;
    request.model = options.model;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.messages = {{"system", sys.str()}, {"user", user.str()}};
    return request;
}

NumericPrediction extract_numeric(const std::string& llm_output, double range_min,
                                  double range_max) {
    if (!(range_min < range_max)) throw ConfigError("extraction range must satisfy min < max");

    // first token of the form [+-]?(digits[.digits*] | .digits)
    for (size_t i = 0; i < llm_output.size(); ++i) {
        size_t start = i;
        size_t j = i;
        if (llm_output[j] == '+' || llm_output[j] == '-') ++j;
        bool int_digits = false;
        while (j < llm_output.size() && std::isdigit(static_cast<unsigned char>(llm_output[j]))) {
            ++j;
            int_digits = true;
        }
        bool frac_digits = false;
        if (j < llm_output.size() && llm_output[j] == '.') {
            size_t k = j + 1;
            while (k < llm_output.size() &&
                   std::isdigit(static_cast<unsigned char>(llm_output[k]))) {
                ++k;
                frac_digits = true;
            }
            if (int_digits || frac_digits) j = frac_digits ? k : j;
        }
        if (!int_digits && !frac_digits) continue;

        NumericPrediction p;
        p.raw_text = llm_output;
        p.value = std::stod(llm_output.substr(start, j - start));
        if (p.value < range_min) {
            p.value = range_min;
            p.clamped = true;
        } else if (p.value > range_max) {
            p.value = range_max;
            p.clamped = true;
        }
        return p;
    }
    throw ExtractionError("no numeric token in LLM output: '" + llm_output.substr(0, 80) + "'");
}

namespace {

json rationale_to_json(const Rationale& r) {
    json dims = json::array();
    for (const auto& d : r.per_dimension) {
        dims.push_back({{"dimension", dimension_label(d.dimension)},
                        {"prediction", d.prediction},
                        {"explanation", d.explanation}});
    }
    return {{"raw_text", r.raw_text},
            {"parse_status", parse_status_name(r.status)},
            {"per_dimension", dims},
            {"summary", r.summary}};
}

Rationale rationale_from_json(const json& j) {
    Rationale r;
    r.raw_text = j.at("raw_text").get<std::string>();
    r.summary = j.value("summary", "");
    std::string status = j.value("parse_status", "failed");
    r.status = status == "ok" ? ParseStatus::Ok
                              : (status == "partial" ? ParseStatus::Partial : ParseStatus::Failed);
    for (const auto& d : j.value("per_dimension", json::array())) {
        std::string label = d.at("dimension").get<std::string>();
        for (Dimension dim : kAllDimensions) {
            if (label == dimension_label(dim)) {
                r.per_dimension.push_back({dim, d.at("prediction").get<std::string>(),
                                           d.at("explanation").get<std::string>()});
            }
        }
    }
    return r;
}

}  // namespace

void save_rationale_store(const std::vector<RationaleEntry>& entries, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write rationale store: " + path);
    for (const auto& e : entries) {
        json j = rationale_to_json(e.rationale);
        j["id"] = e.id;
        j["template_version"] = e.template_version;
        j["model"] = e.model;
        out << j.dump() << '\n';
    }
}

std::vector<RationaleEntry> load_rationale_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open rationale store: " + path);
    std::vector<RationaleEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw DataError("rationale store line " + std::to_string(line_no) + " is not JSON");
        RationaleEntry e;
        e.id = j.at("id").get<std::string>();
        e.template_version = j.value("template_version", "");
        e.model = j.value("model", "");
        e.rationale = rationale_from_json(j);
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace buzz
