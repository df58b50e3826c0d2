#include <atomic>
#include <cmath>
#include <thread>

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include "buzz/digest.hpp"
#include "buzz/encoding.hpp"
#include "buzz/errors.hpp"
#include "buzz/rng.hpp"
#include "support/test_util.hpp"

using namespace buzz;
using nlohmann::json;

TEST_CASE("augment matches the documented template exactly") {
    UtcSeconds t = *parse_iso8601("2024-10-05T19:00:00Z");
    AugmentedInput with = augment("#A#", t, "R");
    CHECK(with.text == "HASHTAG: #A#\nTIME: 2024-10-05T19:00:00Z (Saturday, hour 19)\nREASONING: R");

    AugmentedInput baseline = augment("#A#", t);
    CHECK(baseline.text == "HASHTAG: #A#\nTIME: 2024-10-05T19:00:00Z (Saturday, hour 19)");

    // empty rationale text degenerates to the baseline encoding input
    AugmentedInput empty = augment("#A#", t, "");
    CHECK(empty.text == baseline.text);

    Rationale r;
    r.raw_text = "R";
    CHECK(augment("#A#", t, r).text == with.text);
}

TEST_CASE("augment substring property on random inputs") {
    Rng rng(11);
    for (int iter = 0; iter < 100; ++iter) {
        std::string x = "#", reasoning;
        const int xl = 1 + static_cast<int>(rng.next_below(12));
        for (int i = 0; i < xl; ++i) x.push_back(static_cast<char>('a' + rng.next_below(26)));
        x += "#";
        const int rl = static_cast<int>(rng.next_below(40));
        for (int i = 0; i < rl; ++i)
            reasoning.push_back(static_cast<char>('a' + rng.next_below(26)));
        const UtcSeconds t = 1700000000 + static_cast<UtcSeconds>(rng.next_below(10000000));

        AugmentedInput input = augment(x, t, reasoning);
        CHECK(input.text.find(x) != std::string::npos);
        CHECK(input.text.find(format_iso8601(t)) != std::string::npos);
        if (!reasoning.empty()) CHECK(input.text.find(reasoning) != std::string::npos);
    }
}

TEST_CASE("augment is injective on distinct collision-free triples") {
    UtcSeconds t1 = *parse_iso8601("2024-10-05T19:00:00Z");
    UtcSeconds t2 = *parse_iso8601("2024-10-06T19:00:00Z");
    CHECK(augment("#a#", t1, "r").text != augment("#b#", t1, "r").text);
    CHECK(augment("#a#", t1, "r").text != augment("#a#", t2, "r").text);
    CHECK(augment("#a#", t1, "r").text != augment("#a#", t1, "q").text);
}

namespace {

// Independent re-derivation of the hashing-encoder spec for small cases:
// same hash definition, written as a fresh accumulation loop.
std::vector<double> hashing_oracle(const std::string& text, int dim) {
    std::vector<double> acc(static_cast<size_t>(dim), 0.0);
    for (int len = 2; len <= 4; ++len) {
        for (size_t i = 0; i + static_cast<size_t>(len) <= text.size(); ++i) {
            uint64_t h = 0xcbf29ce484222325ULL;
            for (int k = 0; k < len; ++k) {
                h ^= static_cast<unsigned char>(text[i + static_cast<size_t>(k)]);
                h *= 0x100000001b3ULL;
            }
            h += 0x9e3779b97f4a7c15ULL;
            h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
            h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
            h ^= h >> 31;
            acc[h % static_cast<uint64_t>(dim)] += (h >> 63) ? 1.0 : -1.0;
        }
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    if (norm > 0.0)
        for (double& v : acc) v /= std::sqrt(norm);
    return acc;
}

}  // namespace

TEST_CASE("hashing encoder") {
    SUBCASE("empty string is the zero vector") {
        auto v = hashing_encode("", 16);
        for (double x : v) CHECK(x == 0.0);
        auto one_char = hashing_encode("a", 16);  // below the minimum n-gram length
        for (double x : one_char) CHECK(x == 0.0);
    }
    SUBCASE("unit norm for non-empty inputs") {
        Rng rng(13);
        for (int iter = 0; iter < 50; ++iter) {
            std::string s;
            const int len = 2 + static_cast<int>(rng.next_below(60));
            for (int i = 0; i < len; ++i)
                s.push_back(static_cast<char>('a' + rng.next_below(26)));
            auto v = hashing_encode(s, 64);
            double norm = 0.0;
            for (double x : v) norm += x * x;
            CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
        }
    }
    SUBCASE("bit-for-bit against the independent oracle") {
        for (const char* text : {"abc", "hello world", "#WorldCup#", "xy"}) {
            auto got = hashing_encode(text, 8);
            auto want = hashing_oracle(text, 8);
            REQUIRE(got.size() == want.size());
            for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
        }
    }
    SUBCASE("deterministic across calls") {
        CHECK(hashing_encode("same input", 768) == hashing_encode("same input", 768));
    }
    SUBCASE("single-character perturbation changes the vector") {
        Rng rng(17);
        for (int iter = 0; iter < 30; ++iter) {
            std::string s;
            const int len = 6 + static_cast<int>(rng.next_below(20));
            for (int i = 0; i < len; ++i)
                s.push_back(static_cast<char>('a' + rng.next_below(26)));
            std::string mutated = s;
            const size_t pos = rng.next_below(mutated.size());
            mutated[pos] = mutated[pos] == 'z' ? 'a' : static_cast<char>(mutated[pos] + 1);
            CHECK(hashing_encode(s, 128) != hashing_encode(mutated, 128));
        }
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(hashing_encode("x", 0), ConfigError);
        CHECK_THROWS_AS(hashing_encode("x", 8, 3, 2), ConfigError);
    }
}

TEST_CASE("encode validates backend output") {
    HashingEncoder enc(32);
    UtcSeconds t = *parse_iso8601("2024-10-05T19:00:00Z");
    EmbeddingVector v = encode(augment("#a#", t), enc);
    CHECK(v.values.size() == 32);
    CHECK(v.encoder_id == enc.id());
}

TEST_CASE("batch_encode keeps row order and composes with encode") {
    HashingEncoder enc(24);
    UtcSeconds t = *parse_iso8601("2024-10-05T19:00:00Z");
    std::vector<AugmentedInput> inputs{augment("#a#", t), augment("#b#", t), augment("#c#", t)};
    DesignMatrix m = batch_encode(inputs, enc);
    CHECK(m.rows == 3);
    CHECK(m.cols == 24);
    for (int i = 0; i < 3; ++i) {
        auto single = encode(inputs[static_cast<size_t>(i)], enc);
        for (int c = 0; c < 24; ++c) CHECK(m.at(i, c) == single.values[static_cast<size_t>(c)]);
    }

    std::vector<AugmentedInput> reordered{inputs[2], inputs[0], inputs[1]};
    DesignMatrix m2 = batch_encode(reordered, enc);
    for (int c = 0; c < 24; ++c) {
        CHECK(m2.at(0, c) == m.at(2, c));
        CHECK(m2.at(1, c) == m.at(0, c));
    }
}

TEST_CASE("embedding store round trip and precomputed backend") {
    test::TempDir dir("embed");
    HashingEncoder enc(16);
    UtcSeconds t = *parse_iso8601("2024-10-05T19:00:00Z");
    std::vector<AugmentedInput> inputs{augment("#a#", t), augment("#b#", t)};
    DesignMatrix m = batch_encode(inputs, enc);
    std::vector<std::string> digests;
    for (const auto& in : inputs) digests.push_back(sha256_hex(in.text));

    const std::string bin = dir.file("emb.bin");
    const std::string manifest = dir.file("emb.manifest.json");
    save_embedding_store(m, enc.id(), digests, bin, manifest);

    EmbeddingStore store = load_embedding_store(manifest);
    CHECK(store.encoder_id == enc.id());
    CHECK(store.matrix.values == m.values);
    CHECK(store.digests == digests);

    PrecomputedStore backend(manifest);
    CHECK(backend.dimension() == 16);
    auto v = backend.encode_text(inputs[0].text);
    for (int c = 0; c < 16; ++c) CHECK(v[static_cast<size_t>(c)] == m.at(0, c));

    // a miss is an error naming the digest, never a silent zero vector
    const std::string missing = augment("#zzz#", t).text;
    CHECK_THROWS_WITH_AS(backend.encode_text(missing),
                         doctest::Contains(sha256_hex(missing).c_str()), DataError);

    // a batch with one miss aborts naming the index
    std::vector<AugmentedInput> batch{inputs[0], augment("#zzz#", t)};
    CHECK_THROWS_WITH_AS(batch_encode(batch, backend), doctest::Contains("input 1"), DataError);
}

TEST_CASE("remote encoder caches by text digest") {
    std::atomic<int> calls{0};
    httplib::Server server;
    server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        calls.fetch_add(1);
        auto body = json::parse(req.body);
        CHECK(body.at("model") == "emb-model");
        json values = json::array();
        for (int i = 0; i < 4; ++i) values.push_back(0.25 * (i + 1));
        res.set_content(json{{"data", json::array({{{"embedding", values}}})}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    {
        test::TempDir dir("remote");
        RemoteEncoder enc("http://127.0.0.1:" + std::to_string(port) + "/v1", "key", "emb-model",
                          4, dir.str());
        auto v1 = enc.encode_text("same text");
        auto v2 = enc.encode_text("same text");
        auto v3 = enc.encode_text("same text");
        CHECK(v1 == v2);
        CHECK(v2 == v3);
        CHECK(calls.load() == 1);  // n identical texts, exactly one service call
        enc.encode_text("different");
        CHECK(calls.load() == 2);
    }
    server.stop();
    listener.join();
}

TEST_CASE("remote encoder dimension mismatch is a hard error") {
    httplib::Server server;
    server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"data", json::array({{{"embedding", {1.0, 2.0}}}})}}.dump(),
                        "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    {
        test::TempDir dir("remote2");
        RemoteEncoder enc("http://127.0.0.1:" + std::to_string(port) + "/v1", "", "m", 768,
                          dir.str());
        CHECK_THROWS_AS(enc.encode_text("x"), DataError);
    }
    server.stop();
    listener.join();
}
