#include <algorithm>
#include <cmath>
#include <numeric>

#include "buzz/errors.hpp"
#include "buzz/regress.hpp"

namespace buzz {

ForestModel fit_random_forest(const DesignMatrix& X, std::span<const double> y,
                              const ForestParams& params, uint64_t seed) {
    if (X.rows < 2) throw DataError("random forest needs at least 2 samples");
    if (X.rows != static_cast<int>(y.size()))
        throw DataError("target length does not match matrix rows");
    if (!(params.max_features_fraction > 0.0 && params.max_features_fraction <= 1.0))
        throw ConfigError("max_features_fraction must lie in (0, 1]");
    if (params.n_estimators < 1) throw ConfigError("n_estimators must be >= 1");

    const int n = X.rows;
    const int d = X.cols;
    const int features_per_split =
        params.max_features_fraction < 1.0
            ? std::max(1, static_cast<int>(std::ceil(params.max_features_fraction * d)))
            : 0;

    FeatureOrderCache order(X);
    TreeParams tree_params{params.max_depth, params.min_samples_leaf, features_per_split};

    ForestModel model;
    model.params = params;
    model.seed = seed;
    model.trees.reserve(static_cast<size_t>(params.n_estimators));

    std::vector<int> rows(static_cast<size_t>(n));
    for (int t = 0; t < params.n_estimators; ++t) {
        Rng rng = Rng::stream(seed, static_cast<uint64_t>(t));
        if (params.bootstrap) {
            for (int i = 0; i < n; ++i)
                rows[static_cast<size_t>(i)] =
                    static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        model.trees.push_back(fit_tree_rows(X, y, rows, tree_params, rng, &order));
    }
    return model;
}

std::vector<double> predict(const ForestModel& model, const DesignMatrix& X) {
    std::vector<double> out(static_cast<size_t>(X.rows), 0.0);
    for (const auto& tree : model.trees)
        for (int r = 0; r < X.rows; ++r) out[static_cast<size_t>(r)] += tree.predict_row(X.row(r));
    const double inv = 1.0 / static_cast<double>(model.trees.size());
    for (double& v : out) v *= inv;
    return out;
}

GbdtModel fit_gbdt(const DesignMatrix& X, std::span<const double> y, const GbdtParams& params,
                   uint64_t seed) {
    if (X.rows < 2) throw DataError("gbdt needs at least 2 samples");
    if (X.rows != static_cast<int>(y.size()))
        throw DataError("target length does not match matrix rows");
    if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0))
        throw ConfigError("learning_rate must lie in (0, 1]");
    if (!(params.subsample_fraction > 0.0 && params.subsample_fraction <= 1.0))
        throw ConfigError("subsample_fraction must lie in (0, 1]");
    if (params.n_estimators < 0) throw ConfigError("n_estimators must be >= 0");

    const int n = X.rows;
    FeatureOrderCache order(X);
    TreeParams tree_params{params.max_depth, params.min_samples_leaf, 0};

    GbdtModel model;
    model.params = params;
    model.seed = seed;
    model.init_value =
        std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

    std::vector<double> current(static_cast<size_t>(n), model.init_value);
    std::vector<double> residuals(static_cast<size_t>(n), 0.0);

    auto train_mse = [&] {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = y[static_cast<size_t>(i)] - current[static_cast<size_t>(i)];
            acc += d * d;
        }
        return acc / static_cast<double>(n);
    };
    model.train_mse_curve.push_back(train_mse());

    std::vector<int> all_rows(static_cast<size_t>(n));
    std::iota(all_rows.begin(), all_rows.end(), 0);
    const int subsample_size =
        std::max(1, static_cast<int>(std::floor(params.subsample_fraction * n)));

    for (int m = 0; m < params.n_estimators; ++m) {
        for (int i = 0; i < n; ++i)
            residuals[static_cast<size_t>(i)] =
                y[static_cast<size_t>(i)] - current[static_cast<size_t>(i)];

        Rng rng = Rng::stream(seed, static_cast<uint64_t>(m));
        std::span<const int> rows(all_rows);
        std::vector<int> sampled;
        if (subsample_size < n) {
            sampled = all_rows;
            for (int k = 0; k < subsample_size; ++k) {
                const int j =
                    k + static_cast<int>(rng.next_below(static_cast<uint64_t>(n - k)));
                std::swap(sampled[static_cast<size_t>(k)], sampled[static_cast<size_t>(j)]);
            }
            sampled.resize(static_cast<size_t>(subsample_size));
            std::sort(sampled.begin(), sampled.end());
            rows = sampled;
        }

        RegressionTree tree = fit_tree_rows(X, residuals, rows, tree_params, rng, &order);
        for (int i = 0; i < n; ++i)
            current[static_cast<size_t>(i)] +=
                params.learning_rate * tree.predict_row(X.row(i));
        model.trees.push_back(std::move(tree));
        model.train_mse_curve.push_back(train_mse());
    }
    return model;
}

std::vector<double> predict(const GbdtModel& model, const DesignMatrix& X) {
    std::vector<double> out(static_cast<size_t>(X.rows), model.init_value);
    for (const auto& tree : model.trees)
        for (int r = 0; r < X.rows; ++r)
            out[static_cast<size_t>(r)] += model.params.learning_rate * tree.predict_row(X.row(r));
    return out;
}

}  // namespace buzz
