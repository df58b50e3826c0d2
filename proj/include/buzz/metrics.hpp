#pragma once

#include <initializer_list>
#include <span>
#include <vector>

namespace buzz {

double rmse(std::span<const double> pred, std::span<const double> truth);
double mae(std::span<const double> pred, std::span<const double> truth);

// Fractional (average) ranks, 1-based; ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct SpearmanResult {
    double value = 0.0;
    // Set when either vector is constant: the correlation is undefined and is
    // reported as 0 so downstream tables stay comparable.
    bool degenerate = false;
};

// Pearson correlation of tie-averaged ranks. The 6*sum(d^2) shortcut is wrong
// under ties, so it is not used.
SpearmanResult spearman(std::span<const double> pred, std::span<const double> truth);

enum class Direction { LowerBetter, HigherBetter };

// Percentage improvement of candidate over baseline; negative for regressions.
double relative_improvement(double baseline, double candidate, Direction direction);

struct EvalResult {
    double rmse = 0.0;
    double mae = 0.0;
    double src = 0.0;
    bool src_degenerate = false;
    int n = 0;         // scored instances
    int failures = 0;  // unscorable instances (e.g. numeric extraction errors)
};

// failures are reported, never imputed; pred/truth hold only scored instances.
EvalResult evaluate_predictions(std::span<const double> pred, std::span<const double> truth,
                                int failures = 0);

// initializer-list sugar, mostly for tests and examples
inline std::span<const double> as_span(std::initializer_list<double> v) {
    return {v.begin(), v.size()};
}
inline double rmse(std::initializer_list<double> p, std::initializer_list<double> t) {
    return rmse(as_span(p), as_span(t));
}
inline double mae(std::initializer_list<double> p, std::initializer_list<double> t) {
    return mae(as_span(p), as_span(t));
}
inline SpearmanResult spearman(std::initializer_list<double> p, std::initializer_list<double> t) {
    return spearman(as_span(p), as_span(t));
}
inline EvalResult evaluate_predictions(std::initializer_list<double> p,
                                       std::initializer_list<double> t, int failures = 0) {
    return evaluate_predictions(as_span(p), as_span(t), failures);
}

}  // namespace buzz
