#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "buzz/rng.hpp"

namespace buzz {

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 512;

    // Order-stable serialization of (model, messages, temperature, max_tokens);
    // the cache key is its SHA-256.
    std::string canonical() const;
    std::string cache_key() const;
    void validate() const;  // messages non-empty, first role system or user

    bool operator==(const ChatRequest&) const = default;
};

struct ChatResponse {
    std::string content;
    std::string provider;
    bool cached = false;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::string name() const = 0;
};

struct RetryPolicy {
    int max_attempts = 5;
    int base_delay_ms = 1000;
    double factor = 2.0;
    int max_delay_ms = 30000;
};

// Delay cap before jitter for a 0-based attempt index: base * factor^attempt,
// clipped at max_delay_ms. Actual sleep is uniform in [0, cap] (full jitter).
int backoff_cap_ms(const RetryPolicy& policy, int attempt);

// OpenAI-compatible chat-completions transport. Retries 429/5xx and network
// failures per the policy; other HTTP errors fail immediately.
class HttpProvider : public Provider {
public:
    HttpProvider(std::string endpoint, std::string api_key, RetryPolicy retry = {});
    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override;
    int last_attempt_count() const { return last_attempts_.load(); }

private:
    std::string endpoint_;
    std::string api_key_;
    RetryPolicy retry_;
    std::atomic<int> last_attempts_{0};
    std::mutex jitter_mutex_;
    Rng jitter_;
};

// Endpoint from BUZZ_API_BASE, credentials from BUZZ_API_KEY.
std::unique_ptr<HttpProvider> http_provider_from_env(const std::string& default_endpoint,
                                                     RetryPolicy retry = {});

struct MockScript {
    enum class Kind {
        Rationale,  // template-filled rationale keyed on prompt content
        FixedText,  // always replies with fixed_text
        Fail,       // always throws a provider error
    };
    Kind kind = Kind::Rationale;
    std::string fixed_text;
    // Token -> topic lookup consulted before the built-in keyword table.
    std::unordered_map<std::string, std::string> topic_words;
    std::string fail_message = "scripted provider outage";
};

// Deterministic offline provider: same (request, seed, script) gives
// byte-identical output. Invocations are counted so cache tests can assert
// that hits never reach the provider.
class MockProvider : public Provider {
public:
    explicit MockProvider(MockScript script = {}, uint64_t seed = 0);
    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override { return "mock"; }
    int calls() const { return calls_.load(); }

private:
    MockScript script_;
    uint64_t seed_;
    std::atomic<int> calls_{0};
};

// Token-bucket rate limiter with an injectable clock for tests.
class TokenBucket {
public:
    using Clock = std::function<double()>;  // seconds, monotone

    // rate_per_sec <= 0 disables limiting.
    TokenBucket(double rate_per_sec, double capacity, Clock clock = {});
    // Blocks (sleeping) until a token is available, then consumes it.
    void acquire();
    // Non-blocking probe used by tests: seconds until a token is available.
    double seconds_until_available();

private:
    void refill(double now);
    double rate_;
    double capacity_;
    double tokens_;
    double last_;
    bool has_clock_;
    Clock clock_;
    std::mutex mutex_;
};

struct CacheStats {
    long hits = 0;
    long misses = 0;
    long evictions = 0;
};

// Content-addressed response cache in front of any provider. Guarantees:
// hits never call upstream, concurrent identical misses collapse to a single
// upstream call (single-flight), at most max_in_flight upstream calls run at
// once, and entries are written atomically (write-then-rename).
class CachedProvider : public Provider {
public:
    CachedProvider(Provider& upstream, std::filesystem::path cache_root, int max_in_flight = 4,
                   double rate_per_sec = 0.0);
    ChatResponse complete(const ChatRequest& request) override;
    std::string name() const override { return upstream_.name(); }
    CacheStats stats() const;

private:
    struct Flight;
    std::filesystem::path entry_path(const std::string& digest) const;
    ChatResponse fetch_and_store(const ChatRequest& request, const std::string& digest);

    Provider& upstream_;
    std::filesystem::path root_;
    TokenBucket bucket_;
    int max_in_flight_;
    int in_flight_ = 0;
    std::mutex mutex_;
    std::condition_variable slot_cv_;
    std::map<std::string, std::shared_ptr<Flight>> flights_;
    mutable std::mutex stats_mutex_;
    CacheStats stats_;
};

}  // namespace buzz
