#include "synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "buzz/rng.hpp"

namespace buzz::test {

namespace {

const char* kTopicNames[] = {"astronomy", "cuisine", "robotics", "gardening",
                             "sailing",   "pottery", "chess",    "falconry"};

std::string base36(uint64_t v, int width) {
    static const char digits[] = "0123456789abcdefghijklmnopqrstuvwxyz";
    std::string out(static_cast<size_t>(width), '0');
    for (int i = width - 1; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v % 36];
        v /= 36;
    }
    return out;
}

}  // namespace

SynthData make_synthetic_dataset(const SynthSpec& spec) {
    if (spec.n_topics < 2 || spec.n_topics > 8) throw std::runtime_error("n_topics must be 2..8");
    Rng rng = Rng::stream(spec.seed, "synth");

    SynthData data;
    const UtcSeconds start = *parse_iso8601("2024-09-01T00:00:00Z");
    const double span_sec = 75.0 * 86400.0;
    const double step = span_sec / spec.n;

    std::set<std::string> used_codewords;
    for (int i = 0; i < spec.n; ++i) {
        const UtcSeconds t =
            start + static_cast<UtcSeconds>(i * step + rng.next_unit() * step);
        const int topic = static_cast<int>(rng.next_below(static_cast<uint64_t>(spec.n_topics)));
        const double effect =
            -spec.effect_span / 2.0 +
            spec.effect_span * topic / static_cast<double>(spec.n_topics - 1);
        const double base =
            spec.base_level +
            spec.hour_amplitude * std::sin(2.0 * 3.14159265358979323846 * hour_of_day(t) / 24.0);
        double log_view = base + effect + spec.noise_sd * rng.next_normal();
        if (log_view < 0.0) log_view = 0.0;

        std::string codeword;
        do {
            codeword = "kw" + base36(rng.next_u64(), 8);
        } while (!used_codewords.insert(codeword).second);
        data.topic_words[codeword] = kTopicNames[topic];

        const std::string filler1 = "w" + base36(rng.next_below(4000), 3);
        const std::string filler2 = "w" + base36(rng.next_below(4000), 3);

        HashtagRecord rec;
        char id[16];
        std::snprintf(id, sizeof(id), "s%05d", i);
        rec.id = id;
        rec.text = "#" + filler1 + " " + codeword + " " + filler2 + "#";
        rec.posting_time = t;
        rec.view_count = std::llround(std::expm1(log_view));
        data.records.push_back(std::move(rec));
    }
    return data;
}

void write_synthetic_dataset(const SynthData& data, const std::string& dataset_path,
                             const std::string& topic_map_path) {
    std::ofstream out(dataset_path, std::ios::binary | std::ios::trunc);
    for (const auto& rec : data.records) {
        nlohmann::json j{{"id", rec.id},
                         {"text", rec.text},
                         {"posting_time", format_iso8601(rec.posting_time)},
                         {"view_count", rec.view_count}};
        out << j.dump() << '\n';
    }
    nlohmann::json map = nlohmann::json::object();
    for (const auto& [word, topic] : data.topic_words) map[word] = topic;
    std::ofstream mout(topic_map_path, std::ios::binary | std::ios::trunc);
    mout << map.dump() << '\n';
}

}  // namespace buzz::test
