#include "buzz/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "buzz/errors.hpp"

namespace buzz {
namespace {

void check_pair(std::span<const double> pred, std::span<const double> truth, size_t min_len) {
    if (pred.size() != truth.size())
        throw DataError("metric input length mismatch: " + std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()));
    if (pred.size() < min_len)
        throw DataError("metric input too short: n=" + std::to_string(pred.size()));
    for (double v : pred)
        if (!std::isfinite(v)) throw DataError("non-finite prediction");
    for (double v : truth)
        if (!std::isfinite(v)) throw DataError("non-finite truth value");
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, 1);
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - truth[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, 1);
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred[i] - truth[i]);
    return acc / static_cast<double>(pred.size());
}

std::vector<double> average_ranks(std::span<const double> values) {
    const size_t n = values.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

SpearmanResult spearman(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, 2);
    std::vector<double> rp = average_ranks(pred);
    std::vector<double> rt = average_ranks(truth);
    const double n = static_cast<double>(rp.size());
    double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
    double mt = std::accumulate(rt.begin(), rt.end(), 0.0) / n;
    double cov = 0.0, vp = 0.0, vt = 0.0;
    for (size_t i = 0; i < rp.size(); ++i) {
        double dp = rp[i] - mp;
        double dt = rt[i] - mt;
        cov += dp * dt;
        vp += dp * dp;
        vt += dt * dt;
    }
    if (vp == 0.0 || vt == 0.0) return {0.0, true};
    return {cov / std::sqrt(vp * vt), false};
}

double relative_improvement(double baseline, double candidate, Direction direction) {
    if (baseline == 0.0) throw DataError("relative improvement undefined for zero baseline");
    double delta = direction == Direction::LowerBetter ? baseline - candidate
                                                       : candidate - baseline;
    return delta / baseline * 100.0;
}

EvalResult evaluate_predictions(std::span<const double> pred, std::span<const double> truth,
                                int failures) {
    EvalResult result;
    result.failures = failures;
    result.n = static_cast<int>(pred.size());
    if (pred.empty()) {
        result.rmse = std::numeric_limits<double>::quiet_NaN();
        result.mae = std::numeric_limits<double>::quiet_NaN();
        result.src = std::numeric_limits<double>::quiet_NaN();
        result.src_degenerate = true;
        return result;
    }
    result.rmse = rmse(pred, truth);
    result.mae = mae(pred, truth);
    if (pred.size() >= 2) {
        SpearmanResult s = spearman(pred, truth);
        result.src = s.value;
        result.src_degenerate = s.degenerate;
    } else {
        result.src = 0.0;
        result.src_degenerate = true;
    }
    return result;
}

}  // namespace buzz
