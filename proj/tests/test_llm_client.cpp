#include <atomic>
#include <thread>
#include <vector>

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include "buzz/errors.hpp"
#include "buzz/llm_client.hpp"
#include "buzz/log.hpp"
#include "support/test_util.hpp"

using namespace buzz;
using nlohmann::json;

namespace {

ChatRequest simple_request(const std::string& text = "hi") {
    ChatRequest r;
    r.model = "test-model";
    r.messages = {{"system", "You are terse."}, {"user", text}};
    return r;
}

// In-process OpenAI-style stub with a scriptable per-call status sequence.
class StubServer {
public:
    explicit StubServer(std::vector<int> statuses, std::string content = "hello",
                        bool malformed = false)
        : statuses_(std::move(statuses)) {
        server_.Post("/v1/chat/completions",
                     [this, content, malformed](const httplib::Request&, httplib::Response& res) {
                         const size_t call = calls_.fetch_add(1);
                         const int status =
                             call < statuses_.size() ? statuses_[call] : statuses_.back();
                         if (status != 200) {
                             res.status = status;
                             res.set_content("scripted failure", "text/plain");
                             return;
                         }
                         if (malformed) {
                             res.set_content("{\"unexpected\": true}", "application/json");
                             return;
                         }
                         json body{{"choices",
                                    json::array({{{"message",
                                                   {{"role", "assistant"}, {"content", content}}}}})}};
                         res.set_content(body.dump(), "application/json");
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    int calls() const { return static_cast<int>(calls_.load()); }

private:
    httplib::Server server_;
    std::vector<int> statuses_;
    std::atomic<size_t> calls_{0};
    int port_ = 0;
    std::thread thread_;
};

RetryPolicy fast_retry(int attempts = 5) { return {attempts, 1, 2.0, 8}; }

}  // namespace

TEST_CASE("cache key is stable and sensitive to every field") {
    ChatRequest a = simple_request();
    ChatRequest b = simple_request();
    CHECK(a.cache_key() == b.cache_key());
    CHECK(a.canonical() == b.canonical());

    ChatRequest temp = simple_request();
    temp.temperature = 0.7;
    CHECK(temp.cache_key() != a.cache_key());

    ChatRequest tokens = simple_request();
    tokens.max_tokens = 17;
    CHECK(tokens.cache_key() != a.cache_key());

    ChatRequest model = simple_request();
    model.model = "other";
    CHECK(model.cache_key() != a.cache_key());

    ChatRequest text = simple_request("hi there");
    CHECK(text.cache_key() != a.cache_key());
}

TEST_CASE("request validation") {
    ChatRequest empty;
    empty.model = "m";
    CHECK_THROWS_AS(empty.validate(), ConfigError);
    ChatRequest bad_first = simple_request();
    bad_first.messages[0].role = "assistant";
    CHECK_THROWS_AS(bad_first.validate(), ConfigError);
    CHECK_NOTHROW(simple_request().validate());
}

TEST_CASE("backoff caps are non-decreasing and clipped") {
    RetryPolicy policy{5, 100, 2.0, 500};
    CHECK(backoff_cap_ms(policy, 0) == 100);
    CHECK(backoff_cap_ms(policy, 1) == 200);
    CHECK(backoff_cap_ms(policy, 2) == 400);
    CHECK(backoff_cap_ms(policy, 3) == 500);  // capped
    CHECK(backoff_cap_ms(policy, 4) == 500);
    for (int i = 1; i < 10; ++i)
        CHECK(backoff_cap_ms(policy, i) >= backoff_cap_ms(policy, i - 1));
}

TEST_CASE("http provider returns the stubbed assistant message") {
    StubServer server({200});
    HttpProvider provider(server.endpoint(), "test-key", fast_retry());
    ChatResponse response = provider.complete(simple_request());
    CHECK(response.content == "hello");
    CHECK_FALSE(response.cached);
    CHECK(server.calls() == 1);
    CHECK(provider.last_attempt_count() == 1);
}

TEST_CASE("http provider retries 429 then succeeds") {
    StubServer server({429, 429, 200});
    std::vector<std::string> warnings;
    set_log_sink([&](LogLevel level, const std::string& msg) {
        if (level == LogLevel::Warn) warnings.push_back(msg);
    });
    HttpProvider provider(server.endpoint(), "", fast_retry());
    ChatResponse response = provider.complete(simple_request());
    set_log_sink(nullptr);
    CHECK(response.content == "hello");
    CHECK(server.calls() == 3);
    CHECK(provider.last_attempt_count() == 3);
    CHECK(warnings.size() == 2);  // attempt count observable in logs
}

TEST_CASE("http provider fails immediately on 401") {
    StubServer server({401});
    HttpProvider provider(server.endpoint(), "", fast_retry());
    CHECK_THROWS_AS(provider.complete(simple_request()), ProviderError);
    CHECK(server.calls() == 1);
    try {
        StubServer again({401});
        HttpProvider p2(again.endpoint(), "", fast_retry());
        p2.complete(simple_request());
    } catch (const ProviderError& e) {
        CHECK(e.http_status() == 401);
        CHECK(std::string(e.what()).find("401") != std::string::npos);
    }
}

TEST_CASE("http provider exhausts retries on persistent 503") {
    StubServer server({503});
    HttpProvider provider(server.endpoint(), "", fast_retry(3));
    CHECK_THROWS_WITH_AS(provider.complete(simple_request()),
                         doctest::Contains("retries exhausted"), ProviderError);
    CHECK(server.calls() == 3);
}

TEST_CASE("http provider flags malformed bodies as protocol errors") {
    StubServer server({200}, "unused", /*malformed=*/true);
    HttpProvider provider(server.endpoint(), "", fast_retry());
    CHECK_THROWS_WITH_AS(provider.complete(simple_request()), doctest::Contains("protocol error"),
                         ProviderError);
}

TEST_CASE("mock provider behaviors") {
    SUBCASE("rationale script keys topic off keywords") {
        MockProvider provider;
        ChatRequest request;
        request.model = "mock";
        request.messages = {
            {"system", "reason over TOPIC_CATEGORY, TARGET_AUDIENCE, POSTING_TIME"},
            {"user", "HASHTAG: #concert tonight#\nTIME: 2024-10-05T19:00:00Z (Saturday, hour 19)"}};
        ChatResponse response = provider.complete(request);
        CHECK(response.content.find("TOPIC_CATEGORY PREDICTION: The topic is about entertainment") !=
              std::string::npos);
        CHECK(response.content.find("SUMMARY:") != std::string::npos);
        CHECK(provider.calls() == 1);
    }
    SUBCASE("deterministic byte-for-byte") {
        MockScript script;
        script.topic_words = {{"kwx", "sailing"}};
        MockProvider a(script, 7), b(script, 7);
        ChatRequest request;
        request.model = "mock";
        request.messages = {{"system", "TOPIC_CATEGORY only"},
                            {"user", "HASHTAG: #kwx w12#\nTIME: 2024-10-05T19:00:00Z"}};
        CHECK(a.complete(request).content == b.complete(request).content);
        CHECK(a.complete(request).content.find("sailing") != std::string::npos);
    }
    SUBCASE("fewshot prompts get an in-range number") {
        MockProvider provider;
        ChatRequest request;
        request.model = "mock";
        request.messages = {
            {"system", "Respond with a single number between 12 and 18.\n[template fewshot-v1]"},
            {"user", "HASHTAG: #x#\nTIME: 2024-10-05T19:00:00Z\nLOG_VIEWS:"}};
        double value = std::stod(provider.complete(request).content);
        CHECK(value >= 12.0);
        CHECK(value <= 18.0);
    }
    SUBCASE("fail script throws a provider error") {
        MockScript script;
        script.kind = MockScript::Kind::Fail;
        MockProvider provider(script);
        CHECK_THROWS_AS(provider.complete(simple_request()), ProviderError);
    }
}

TEST_CASE("cached provider: miss, hit, corruption recovery") {
    test::TempDir dir("cache");
    MockScript script;
    script.kind = MockScript::Kind::FixedText;
    script.fixed_text = "cached content";
    MockProvider upstream(script);
    CachedProvider cached(upstream, dir.path());

    ChatRequest request = simple_request();
    ChatResponse first = cached.complete(request);
    CHECK_FALSE(first.cached);
    CHECK(upstream.calls() == 1);

    ChatResponse second = cached.complete(request);
    CHECK(second.cached);
    CHECK(second.content == "cached content");
    CHECK(upstream.calls() == 1);  // hit made zero transport calls

    // different temperature -> different key -> miss
    ChatRequest warm = simple_request();
    warm.temperature = 1.0;
    cached.complete(warm);
    CHECK(upstream.calls() == 2);

    // corrupt the entry on disk; next call evicts and refetches
    const std::string digest = request.cache_key();
    const auto entry = dir.path() / digest.substr(0, 2) / (digest + ".json");
    test::write_file(entry.string(), "{not json");
    std::vector<std::string> warnings;
    set_log_sink([&](LogLevel level, const std::string& msg) {
        if (level == LogLevel::Warn) warnings.push_back(msg);
    });
    ChatResponse third = cached.complete(request);
    set_log_sink(nullptr);
    CHECK_FALSE(third.cached);
    CHECK(third.content == "cached content");
    CHECK(upstream.calls() == 3);
    CHECK(warnings.size() == 1);

    CacheStats stats = cached.stats();
    CHECK(stats.hits == 1);
    CHECK(stats.misses == 3);
    CHECK(stats.evictions == 1);
}

namespace {

// Upstream that stalls so concurrent misses really overlap.
class SlowProvider : public Provider {
public:
    ChatResponse complete(const ChatRequest&) override {
        calls.fetch_add(1);
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        return {"slow result", name(), false};
    }
    std::string name() const override { return "slow"; }
    std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("single-flight: concurrent identical misses cause one upstream call") {
    test::TempDir dir("flight");
    SlowProvider upstream;
    CachedProvider cached(upstream, dir.path(), /*max_in_flight=*/8);

    constexpr int kThreads = 8;
    std::vector<std::thread> threads;
    std::vector<std::string> results(kThreads);
    for (int i = 0; i < kThreads; ++i) {
        threads.emplace_back(
            [&, i] { results[static_cast<size_t>(i)] = cached.complete(simple_request()).content; });
    }
    for (auto& t : threads) t.join();
    CHECK(upstream.calls.load() == 1);
    for (const auto& r : results) CHECK(r == "slow result");
}

TEST_CASE("concurrency limit holds under load") {
    test::TempDir dir("limit");

    class GaugeProvider : public Provider {
    public:
        ChatResponse complete(const ChatRequest&) override {
            const int now = 1 + active.fetch_add(1);
            int seen = peak.load();
            while (now > seen && !peak.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            active.fetch_sub(1);
            return {"ok", name(), false};
        }
        std::string name() const override { return "gauge"; }
        std::atomic<int> active{0};
        std::atomic<int> peak{0};
    } upstream;

    CachedProvider cached(upstream, dir.path(), /*max_in_flight=*/2);
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) {
        threads.emplace_back([&, i] {
            cached.complete(simple_request("distinct " + std::to_string(i)));
        });
    }
    for (auto& t : threads) t.join();
    CHECK(upstream.peak.load() <= 2);
}

TEST_CASE("token bucket with a manual clock") {
    double now = 0.0;
    TokenBucket bucket(2.0, 1.0, [&] { return now; });  // 2 tokens/sec, capacity 1
    CHECK(bucket.seconds_until_available() == 0.0);
    bucket.acquire();  // consumes the only token
    CHECK(bucket.seconds_until_available() == doctest::Approx(0.5));
    now += 0.25;
    CHECK(bucket.seconds_until_available() == doctest::Approx(0.25));
    now += 0.25;
    CHECK(bucket.seconds_until_available() == 0.0);
    bucket.acquire();
    CHECK(bucket.seconds_until_available() > 0.0);

    TokenBucket unlimited(0.0, 1.0);
    CHECK(unlimited.seconds_until_available() == 0.0);  // disabled
}
