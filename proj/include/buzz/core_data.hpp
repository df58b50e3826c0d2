#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "buzz/timeutil.hpp"

namespace buzz {

struct HashtagRecord {
    std::string id;
    std::string text;
    UtcSeconds posting_time = 0;
    long long view_count = 0;

    bool operator==(const HashtagRecord&) const = default;
};

// ln(view_count + 1); rejects negative counts.
double normalize_target(long long view_count);

// exp(log_view) - 1; rejects negative inputs.
double denormalize_target(double log_view);

struct LineIssue {
    int line = 0;  // 1-based
    std::string message;
};

struct ParseReport {
    std::vector<HashtagRecord> records;  // file order
    std::vector<LineIssue> errors;
    std::vector<LineIssue> warnings;
    bool ok() const { return errors.empty(); }
};

// Line-delimited JSON records with keys id, text, posting_time (ISO-8601 with
// timezone) and view_count. Malformed lines land in the error report instead
// of being dropped silently; unknown keys produce warnings.
ParseReport parse_dataset(std::istream& in);
ParseReport load_dataset(const std::string& path);

struct TemporalSplit {
    std::vector<std::string> train_ids;  // chronological, ties broken by id
    std::vector<std::string> test_ids;
    UtcSeconds boundary_time = 0;        // first test record's posting time

    bool operator==(const TemporalSplit&) const = default;
};

// Chronological split: first floor(train_fraction * n) records train, rest
// test. Fails when either side would be empty.
TemporalSplit temporal_split(const std::vector<HashtagRecord>& records, double train_fraction);

void save_split(const TemporalSplit& split, const std::string& path);
TemporalSplit load_split(const std::string& path);

struct BucketTarget {
    std::string id;
    double log_view = 0.0;
};

struct ViewBuckets {
    std::vector<double> boundaries;            // k-1 cut points, strictly increasing
    std::vector<BucketTarget> representatives; // one per bucket, ascending bucket order
};

// Equal-frequency buckets over train log-views: boundaries at the k-1 evenly
// spaced quantiles (linear interpolation between closest ranks), one
// representative per bucket = the target closest to the bucket median, ties
// broken by smaller id. Values below boundaries[j] and at/above
// boundaries[j-1] fall in bucket j.
ViewBuckets bucketize(std::vector<BucketTarget> targets, int k);

}  // namespace buzz
