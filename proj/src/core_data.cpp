#include "buzz/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "buzz/errors.hpp"

namespace buzz {

using nlohmann::json;

double normalize_target(long long view_count) {
    if (view_count < 0)
        throw DataError("view_count must be non-negative, got " + std::to_string(view_count));
    return std::log1p(static_cast<double>(view_count));
}

double denormalize_target(double log_view) {
    if (log_view < 0.0)
        throw DataError("log_view must be non-negative, got " + std::to_string(log_view));
    return std::expm1(log_view);
}

namespace {

bool is_blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

ParseReport parse_dataset(std::istream& in) {
    ParseReport report;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    static const std::set<std::string> known_keys{"id", "text", "posting_time", "view_count"};

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || is_blank(line)) continue;

        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            report.errors.push_back({line_no, "not a valid record object"});
            continue;
        }

        std::string missing;
        for (const char* key : {"id", "text", "posting_time", "view_count"}) {
            if (!obj.contains(key)) {
                missing = key;
                break;
            }
        }
        if (!missing.empty()) {
            report.errors.push_back({line_no, "missing key '" + missing + "'"});
            continue;
        }

        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (!known_keys.count(it.key()))
                report.warnings.push_back({line_no, "unknown key '" + it.key() + "' ignored"});
        }

        if (!obj["id"].is_string() || !obj["text"].is_string() ||
            !obj["posting_time"].is_string()) {
            report.errors.push_back({line_no, "id, text and posting_time must be strings"});
            continue;
        }
        if (!obj["view_count"].is_number_integer()) {
            report.errors.push_back({line_no, "view_count must be an integer"});
            continue;
        }

        HashtagRecord rec;
        rec.id = obj["id"].get<std::string>();
        rec.text = obj["text"].get<std::string>();
        rec.view_count = obj["view_count"].get<long long>();

        if (rec.view_count < 0) {
            report.errors.push_back(
                {line_no, "negative view_count " + std::to_string(rec.view_count)});
            continue;
        }
        if (is_blank(rec.text)) {
            report.errors.push_back({line_no, "text is empty"});
            continue;
        }
        auto ts = parse_iso8601(obj["posting_time"].get<std::string>());
        if (!ts) {
            report.errors.push_back(
                {line_no, "unparseable timestamp '" + obj["posting_time"].get<std::string>() + "'"});
            continue;
        }
        rec.posting_time = *ts;
        if (!seen_ids.insert(rec.id).second) {
            report.errors.push_back({line_no, "duplicate id '" + rec.id + "'"});
            continue;
        }
        report.records.push_back(std::move(rec));
    }
    return report;
}

ParseReport load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset file: " + path);
    return parse_dataset(in);
}

TemporalSplit temporal_split(const std::vector<HashtagRecord>& records, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw DataError("train_fraction must lie in (0,1)");
    const size_t n = records.size();
    if (n < 2) throw DataError("cannot split fewer than 2 records");

    std::vector<const HashtagRecord*> order;
    order.reserve(n);
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const HashtagRecord* a, const HashtagRecord* b) {
        if (a->posting_time != b->posting_time) return a->posting_time < b->posting_time;
        return a->id < b->id;
    });

    const size_t n_train =
        static_cast<size_t>(std::floor(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train == n)
        throw DataError("split leaves one side empty (n=" + std::to_string(n) +
                        ", fraction=" + std::to_string(train_fraction) + ")");

    TemporalSplit split;
    split.train_ids.reserve(n_train);
    split.test_ids.reserve(n - n_train);
    for (size_t i = 0; i < n; ++i) {
        if (i < n_train)
            split.train_ids.push_back(order[i]->id);
        else
            split.test_ids.push_back(order[i]->id);
    }
    split.boundary_time = order[n_train]->posting_time;
    return split;
}

void save_split(const TemporalSplit& split, const std::string& path) {
    json j{{"boundary_time", format_iso8601(split.boundary_time)},
           {"train_ids", split.train_ids},
           {"test_ids", split.test_ids}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write split manifest: " + path);
    out << j.dump(2) << '\n';
}

TemporalSplit load_split(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open split manifest: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw DataError("split manifest is not valid JSON: " + path);
    TemporalSplit split;
    auto ts = parse_iso8601(j.at("boundary_time").get<std::string>());
    if (!ts) throw DataError("split manifest has bad boundary_time");
    split.boundary_time = *ts;
    split.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    split.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    return split;
}

namespace {

// Linear interpolation between closest ranks (the R-7 rule) on sorted data.
double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double h = p * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_of(const std::vector<const BucketTarget*>& members) {
    std::vector<double> vals;
    vals.reserve(members.size());
    for (const auto* m : members) vals.push_back(m->log_view);
    std::sort(vals.begin(), vals.end());
    const size_t n = vals.size();
    if (n % 2 == 1) return vals[n / 2];
    return (vals[n / 2 - 1] + vals[n / 2]) / 2.0;
}

}  // namespace

ViewBuckets bucketize(std::vector<BucketTarget> targets, int k) {
    if (k < 1) throw DataError("bucket count must be at least 1");
    if (static_cast<int>(targets.size()) < k)
        throw DataError("need at least k targets, have " + std::to_string(targets.size()));

    std::vector<double> sorted_views;
    sorted_views.reserve(targets.size());
    for (const auto& t : targets) sorted_views.push_back(t.log_view);
    std::sort(sorted_views.begin(), sorted_views.end());

    std::vector<double> uniq = sorted_views;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (static_cast<int>(uniq.size()) < k)
        throw DataError("only " + std::to_string(uniq.size()) +
                        " distinct log-view values; choose a smaller k");

    ViewBuckets buckets;
    for (int j = 1; j < k; ++j) {
        buckets.boundaries.push_back(
            quantile_sorted(sorted_views, static_cast<double>(j) / static_cast<double>(k)));
    }
    for (size_t i = 1; i < buckets.boundaries.size(); ++i) {
        if (!(buckets.boundaries[i - 1] < buckets.boundaries[i]))
            throw DataError("quantile boundaries are not strictly increasing; choose a smaller k");
    }

    std::vector<std::vector<const BucketTarget*>> members(static_cast<size_t>(k));
    for (const auto& t : targets) {
        size_t b = buckets.boundaries.size();
        for (size_t j = 0; j < buckets.boundaries.size(); ++j) {
            if (t.log_view < buckets.boundaries[j]) {
                b = j;
                break;
            }
        }
        members[b].push_back(&t);
    }
    for (int j = 0; j < k; ++j) {
        if (members[static_cast<size_t>(j)].empty())
            throw DataError("bucket " + std::to_string(j) + " is empty; choose a smaller k");
    }

    for (int j = 0; j < k; ++j) {
        const auto& group = members[static_cast<size_t>(j)];
        const double med = median_of(group);
        const BucketTarget* best = group.front();
        double best_dist = std::fabs(best->log_view - med);
        for (const auto* cand : group) {
            double dist = std::fabs(cand->log_view - med);
            if (dist < best_dist || (dist == best_dist && cand->id < best->id)) {
                best = cand;
                best_dist = dist;
            }
        }
        buckets.representatives.push_back(*best);
    }
    return buckets;
}

}  // namespace buzz
