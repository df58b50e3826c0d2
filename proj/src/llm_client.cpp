#include "buzz/llm_client.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "buzz/digest.hpp"
#include "buzz/errors.hpp"
#include "buzz/log.hpp"

namespace buzz {

using nlohmann::json;

std::string ChatRequest::canonical() const {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"content", m.content}, {"role", m.role}});
    json j{{"max_tokens", max_tokens},
           {"messages", msgs},
           {"model", model},
           {"temperature", temperature}};
    return j.dump();
}

std::string ChatRequest::cache_key() const { return sha256_hex(canonical()); }

void ChatRequest::validate() const {
    if (messages.empty()) throw ConfigError("chat request has no messages");
    const std::string& first = messages.front().role;
    if (first != "system" && first != "user")
        throw ConfigError("first message role must be system or user, got '" + first + "'");
    if (temperature < 0.0) throw ConfigError("temperature must be non-negative");
    if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

int backoff_cap_ms(const RetryPolicy& policy, int attempt) {
    double cap = static_cast<double>(policy.base_delay_ms);
    for (int i = 0; i < attempt; ++i) cap *= policy.factor;
    return static_cast<int>(std::min(cap, static_cast<double>(policy.max_delay_ms)));
}

namespace {

// "https://api.example.com/v1" -> ("https://api.example.com", "/v1")
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = endpoint.find('/', host_start);
    if (path_start == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, path_start), prefix};
}

bool is_transient_status(int status) { return status == 429 || (status >= 500 && status < 600); }

}  // namespace

HttpProvider::HttpProvider(std::string endpoint, std::string api_key, RetryPolicy retry)
    : endpoint_(std::move(endpoint)),
      api_key_(std::move(api_key)),
      retry_(retry),
      jitter_(mix64(static_cast<uint64_t>(
          std::chrono::steady_clock::now().time_since_epoch().count()))) {}

std::string HttpProvider::name() const { return "http:" + endpoint_; }

ChatResponse HttpProvider::complete(const ChatRequest& request) {
    request.validate();
    auto [base, prefix] = split_endpoint(endpoint_);

    json msgs = json::array();
    for (const auto& m : request.messages)
        msgs.push_back({{"role", m.role}, {"content", m.content}});
    json body{{"model", request.model},
              {"messages", msgs},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    std::string last_failure;
    for (int attempt = 0; attempt < retry_.max_attempts; ++attempt) {
        if (attempt > 0) {
            int cap = backoff_cap_ms(retry_, attempt - 1);
            int delay;
            {
                std::lock_guard<std::mutex> lock(jitter_mutex_);
                delay = static_cast<int>(jitter_.next_below(static_cast<uint64_t>(cap) + 1));
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        last_attempts_.store(attempt + 1);

        httplib::Client client(base);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(120, 0);
        auto res = client.Post(prefix + "/chat/completions", headers, payload, "application/json");

        if (!res) {
            last_failure = "transport failure: " + httplib::to_string(res.error());
            log_warn("chat attempt " + std::to_string(attempt + 1) + "/" +
                     std::to_string(retry_.max_attempts) + " failed (" + last_failure + ")");
            continue;
        }
        if (res->status == 200) {
            json parsed = json::parse(res->body, nullptr, false);
            if (parsed.is_discarded() || !parsed.contains("choices") ||
                !parsed["choices"].is_array() || parsed["choices"].empty() ||
                !parsed["choices"][0].contains("message") ||
                !parsed["choices"][0]["message"].contains("content")) {
                throw ProviderError("protocol error: response body lacks choices[0].message.content",
                                    res->status);
            }
            return {parsed["choices"][0]["message"]["content"].get<std::string>(), name(), false};
        }
        if (is_transient_status(res->status)) {
            last_failure = "HTTP " + std::to_string(res->status);
            log_warn("chat attempt " + std::to_string(attempt + 1) + "/" +
                     std::to_string(retry_.max_attempts) + " failed (" + last_failure + ")");
            continue;
        }
        std::string excerpt = res->body.substr(0, 200);
        throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " + excerpt,
                            res->status);
    }
    throw ProviderError("retries exhausted after " + std::to_string(retry_.max_attempts) +
                        " attempts; last failure: " + last_failure);
}

std::unique_ptr<HttpProvider> http_provider_from_env(const std::string& default_endpoint,
                                                     RetryPolicy retry) {
    const char* base = std::getenv("BUZZ_API_BASE");
    const char* key = std::getenv("BUZZ_API_KEY");
    return std::make_unique<HttpProvider>(base ? base : default_endpoint, key ? key : "", retry);
}

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Returns the remainder of the first line starting with the given label.
std::string line_after(const std::string& text, const std::string& label) {
    size_t pos = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + pos, eol - pos);
        if (line.substr(0, label.size()) == label)
            return std::string(line.substr(label.size()));
        pos = eol + 1;
    }
    return "";
}

std::string message_content(const ChatRequest& request, const std::string& role) {
    for (const auto& m : request.messages)
        if (m.role == role) return m.content;
    return "";
}

// Built-in keyword table used when no explicit topic map is supplied.
const std::vector<std::pair<std::string, std::string>> kKeywordTopics = {
    {"concert", "entertainment"}, {"music", "entertainment"}, {"movie", "entertainment"},
    {"film", "entertainment"},    {"drama", "entertainment"}, {"star", "entertainment"},
    {"match", "sports"},          {"league", "sports"},       {"goal", "sports"},
    {"olympic", "sports"},        {"worldcup", "sports"},     {"election", "politics"},
    {"policy", "politics"},       {"minister", "politics"},   {"stock", "finance"},
    {"market", "finance"},        {"economy", "finance"},
};

std::vector<std::string> tokenize_ascii(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80 || c == '_' || c == '-') {
            cur.push_back(static_cast<char>(c));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

std::string detect_topic(const std::string& hashtag,
                         const std::unordered_map<std::string, std::string>& topic_words) {
    if (!topic_words.empty()) {
        for (const auto& token : tokenize_ascii(hashtag)) {
            auto it = topic_words.find(token);
            if (it != topic_words.end()) return it->second;
        }
    }
    std::string lower = lowercase(hashtag);
    for (const auto& [needle, topic] : kKeywordTopics) {
        if (lower.find(needle) != std::string::npos) return topic;
    }
    return "general";
}

std::string first_number_token(const std::string& text, size_t from) {
    for (size_t i = from; i < text.size(); ++i) {
        if (std::isdigit(static_cast<unsigned char>(text[i]))) {
            size_t j = i;
            while (j < text.size() &&
                   (std::isdigit(static_cast<unsigned char>(text[j])) || text[j] == '.'))
                ++j;
            return text.substr(i, j - i);
        }
    }
    return "";
}

}  // namespace

MockProvider::MockProvider(MockScript script, uint64_t seed)
    : script_(std::move(script)), seed_(seed) {}

ChatResponse MockProvider::complete(const ChatRequest& request) {
    request.validate();
    calls_.fetch_add(1);

    if (script_.kind == MockScript::Kind::Fail) throw ProviderError(script_.fail_message);
    if (script_.kind == MockScript::Kind::FixedText) return {script_.fixed_text, name(), false};

    const std::string system = message_content(request, "system");
    const std::string user = message_content(request, "user");
    const std::string hashtag = line_after(user, "HASHTAG: ");
    const std::string time_line = line_after(user, "TIME: ");

    // Few-shot numeric prompt: answer with a value inside the advertised range.
    if (system.find("[template fewshot-v1]") != std::string::npos) {
        double lo = 0.0, hi = 0.0;
        size_t pos = system.find("between ");
        if (pos != std::string::npos) {
            std::string a = first_number_token(system, pos);
            size_t and_pos = system.find(" and ", pos);
            std::string b = and_pos == std::string::npos ? "" : first_number_token(system, and_pos);
            if (!a.empty() && !b.empty()) {
                lo = std::stod(a);
                hi = std::stod(b);
            }
        }
        uint64_t h = mix64(fnv1a64(hashtag) ^ seed_);
        double frac = static_cast<double>(h % 1000) / 999.0;
        double value = lo + frac * (hi - lo);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.1f", value);
        return {std::string(buf), name(), false};
    }

    const std::string topic = detect_topic(hashtag, script_.topic_words);
    const bool want_topic = system.find("TOPIC_CATEGORY") != std::string::npos;
    const bool want_audience = system.find("TARGET_AUDIENCE") != std::string::npos;
    const bool want_time = system.find("POSTING_TIME") != std::string::npos;

    std::ostringstream out;
    if (want_topic) {
        out << "TOPIC_CATEGORY PREDICTION: The topic is about " << topic << ".\n";
        out << "TOPIC_CATEGORY EXPLANATION: Hashtags about " << topic
            << " attract the crowd that follows " << topic << " closely, and " << topic
            << " stories circulate fast among them.\n";
    }
    if (want_audience) {
        out << "TARGET_AUDIENCE PREDICTION: General audience across age groups.\n";
        out << "TARGET_AUDIENCE EXPLANATION: Broadly resonant content reaches many user "
               "segments at once.\n";
    }
    if (want_time) {
        out << "POSTING_TIME PREDICTION: Posted at " << time_line << ".\n";
        out << "POSTING_TIME EXPLANATION: Visibility follows the platform's daily activity "
               "rhythm around that slot.\n";
    }
    out << "SUMMARY: Expected popularity is driven by";
    bool first = true;
    if (want_topic) {
        out << " the " << topic << " theme";
        first = false;
    }
    if (want_audience) {
        out << (first ? " " : " and ") << "its audience breadth";
        first = false;
    }
    if (want_time) {
        out << (first ? " " : " and ") << "the posting slot";
    }
    out << ".";
    return {out.str(), name(), false};
}

TokenBucket::TokenBucket(double rate_per_sec, double capacity, Clock clock)
    : rate_(rate_per_sec),
      capacity_(std::max(capacity, 1.0)),
      tokens_(std::max(capacity, 1.0)),
      last_(0.0),
      has_clock_(static_cast<bool>(clock)),
      clock_(std::move(clock)) {
    if (!has_clock_) {
        clock_ = [] {
            return std::chrono::duration<double>(
                       std::chrono::steady_clock::now().time_since_epoch())
                .count();
        };
    }
    last_ = clock_();
}

void TokenBucket::refill(double now) {
    if (now > last_) {
        tokens_ = std::min(capacity_, tokens_ + (now - last_) * rate_);
        last_ = now;
    }
}

double TokenBucket::seconds_until_available() {
    if (rate_ <= 0.0) return 0.0;
    std::lock_guard<std::mutex> lock(mutex_);
    refill(clock_());
    if (tokens_ >= 1.0) return 0.0;
    return (1.0 - tokens_) / rate_;
}

void TokenBucket::acquire() {
    if (rate_ <= 0.0) return;
    for (;;) {
        double wait;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            refill(clock_());
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait = (1.0 - tokens_) / rate_;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
}

struct CachedProvider::Flight {
    std::mutex mutex;
    std::condition_variable cv;
    bool done = false;
    ChatResponse response;
    std::exception_ptr error;
};

CachedProvider::CachedProvider(Provider& upstream, std::filesystem::path cache_root,
                               int max_in_flight, double rate_per_sec)
    : upstream_(upstream),
      root_(std::move(cache_root)),
      bucket_(rate_per_sec, std::max(rate_per_sec, 1.0)),
      max_in_flight_(std::max(max_in_flight, 1)) {
    std::filesystem::create_directories(root_);
}

std::filesystem::path CachedProvider::entry_path(const std::string& digest) const {
    return root_ / digest.substr(0, 2) / (digest + ".json");
}

CacheStats CachedProvider::stats() const {
    std::lock_guard<std::mutex> lock(stats_mutex_);
    return stats_;
}

ChatResponse CachedProvider::complete(const ChatRequest& request) {
    request.validate();
    const std::string digest = request.cache_key();

    std::shared_ptr<Flight> flight;
    bool leader = false;
    {
        std::unique_lock<std::mutex> lock(mutex_);
        auto it = flights_.find(digest);
        if (it != flights_.end()) {
            flight = it->second;
        } else {
            // Disk probe happens under the lock so two concurrent misses for
            // the same key cannot both become leaders.
            const auto path = entry_path(digest);
            std::error_code ec;
            if (std::filesystem::exists(path, ec)) {
                std::ifstream in(path, std::ios::binary);
                json entry = json::parse(in, nullptr, false);
                if (!entry.is_discarded() && entry.contains("response") &&
                    entry["response"].contains("content")) {
                    std::lock_guard<std::mutex> slock(stats_mutex_);
                    ++stats_.hits;
                    return {entry["response"]["content"].get<std::string>(),
                            entry["response"].value("provider", upstream_.name()), true};
                }
                std::filesystem::remove(path, ec);
                {
                    std::lock_guard<std::mutex> slock(stats_mutex_);
                    ++stats_.evictions;
                }
                log_warn("evicted corrupt cache entry " + digest);
            }
            flight = std::make_shared<Flight>();
            flights_[digest] = flight;
            leader = true;
        }
    }

    if (!leader) {
        std::unique_lock<std::mutex> flock(flight->mutex);
        flight->cv.wait(flock, [&] { return flight->done; });
        if (flight->error) std::rethrow_exception(flight->error);
        ChatResponse shared = flight->response;
        shared.cached = true;  // this caller performed no transport call
        std::lock_guard<std::mutex> slock(stats_mutex_);
        ++stats_.hits;
        return shared;
    }

    {
        std::lock_guard<std::mutex> slock(stats_mutex_);
        ++stats_.misses;
    }
    ChatResponse response;
    std::exception_ptr error;
    try {
        response = fetch_and_store(request, digest);
    } catch (...) {
        error = std::current_exception();
    }
    {
        std::lock_guard<std::mutex> flock(flight->mutex);
        flight->done = true;
        flight->response = response;
        flight->error = error;
    }
    flight->cv.notify_all();
    {
        std::lock_guard<std::mutex> lock(mutex_);
        flights_.erase(digest);
    }
    if (error) std::rethrow_exception(error);
    return response;
}

ChatResponse CachedProvider::fetch_and_store(const ChatRequest& request,
                                             const std::string& digest) {
    {
        std::unique_lock<std::mutex> lock(mutex_);
        slot_cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
        ++in_flight_;
    }
    ChatResponse response;
    try {
        bucket_.acquire();
        response = upstream_.complete(request);
    } catch (...) {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            --in_flight_;
        }
        slot_cv_.notify_one();
        throw;
    }
    {
        std::lock_guard<std::mutex> lock(mutex_);
        --in_flight_;
    }
    slot_cv_.notify_one();

    const auto path = entry_path(digest);
    std::filesystem::create_directories(path.parent_path());
    json entry{{"request", json::parse(request.canonical())},
               {"response", {{"content", response.content}, {"provider", response.provider}}},
               {"created_at", std::chrono::duration_cast<std::chrono::seconds>(
                                  std::chrono::system_clock::now().time_since_epoch())
                                  .count()}};
    const auto tmp = path.parent_path() / (digest + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << entry.dump();
        if (!out) throw InternalError("failed writing cache entry " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    response.cached = false;
    return response;
}

}  // namespace buzz
