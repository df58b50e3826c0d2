#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "buzz/encoding.hpp"
#include "buzz/rng.hpp"

namespace buzz {

// ---------------------------------------------------------------------------
// Regression trees (shared base learner for the forest and boosting models)
// ---------------------------------------------------------------------------

struct TreeParams {
    int max_depth = 6;
    int min_samples_leaf = 1;
    // When positive, a fresh random subset of this many features is sampled
    // at every split; 0 means all features are candidates.
    int features_per_split = 0;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    double predict_row(std::span<const double> x) const;
};

// Per-feature argsort of a design matrix, computed once and shared across all
// trees fit on the same matrix.
class FeatureOrderCache {
public:
    explicit FeatureOrderCache(const DesignMatrix& X);
    const std::vector<int>& order(int feature) const { return orders_[feature]; }

private:
    std::vector<std::vector<int>> orders_;
};

// Greedy top-down variance-reduction CART. Splits maximize the SSE decrease
// over (feature, midpoint-of-consecutive-distinct-values) candidates; ties go
// to the lower feature index, then the lower threshold. Stops on max_depth,
// min_samples_leaf, or zero gain; leaf value is the mean target.
RegressionTree fit_tree(const DesignMatrix& X, std::span<const double> y, const TreeParams& params,
                        Rng& rng);

// rows may contain duplicates (bootstrap resampling); they count as repeated
// samples. order, when given, must come from the same matrix.
RegressionTree fit_tree_rows(const DesignMatrix& X, std::span<const double> y,
                             std::span<const int> rows, const TreeParams& params, Rng& rng,
                             const FeatureOrderCache* order = nullptr);

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

struct ForestParams {
    int n_estimators = 300;
    int max_depth = 30;
    int min_samples_leaf = 1;
    double max_features_fraction = 1.0;
    bool bootstrap = true;
};

struct ForestModel {
    ForestParams params;
    std::vector<RegressionTree> trees;
    uint64_t seed = 0;
};

// Each tree draws its own RNG stream from (seed, tree index), so growing the
// ensemble never perturbs earlier trees.
ForestModel fit_random_forest(const DesignMatrix& X, std::span<const double> y,
                              const ForestParams& params, uint64_t seed);

// ---------------------------------------------------------------------------
// Least-squares gradient boosting
// ---------------------------------------------------------------------------

struct GbdtParams {
    int n_estimators = 300;
    double learning_rate = 0.05;  // must lie in (0, 1]
    int max_depth = 4;
    int min_samples_leaf = 1;
    double subsample_fraction = 1.0;
};

struct GbdtModel {
    GbdtParams params;
    double init_value = 0.0;  // F_0 = mean(y)
    std::vector<RegressionTree> trees;
    // Training MSE after initialization and after every boosting round;
    // non-increasing by construction when subsample_fraction == 1.
    std::vector<double> train_mse_curve;
    uint64_t seed = 0;
};

GbdtModel fit_gbdt(const DesignMatrix& X, std::span<const double> y, const GbdtParams& params,
                   uint64_t seed);

// ---------------------------------------------------------------------------
// Multilayer perceptron
// ---------------------------------------------------------------------------

struct MlpParams {
    std::vector<int> hidden = {64};  // 0..3 hidden layers
    int batch_size = 64;             // clipped to n
    double learning_rate = 0.003;
    int epochs = 200;
};

struct MlpLayer {
    int in = 0, out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;  // out
};

struct MlpModel {
    MlpParams params;
    std::vector<double> feat_mean, feat_std;  // train standardization, stored in the model
    std::vector<MlpLayer> layers;             // hidden (ReLU) + linear scalar output
    uint64_t seed = 0;
};

// ReLU hidden layers, linear scalar output, squared-error loss, Adam
// (0.9/0.999, eps 1e-8), He-style init, per-epoch seeded shuffling. Throws on
// a non-finite loss, naming the epoch.
MlpModel fit_mlp(const DesignMatrix& X, std::span<const double> y, const MlpParams& params,
                 uint64_t seed);

// Mean squared error and its gradient w.r.t. every weight and bias, on
// already-standardized inputs. Exposed so gradients can be checked against
// finite differences.
double mlp_loss_and_grad(const std::vector<MlpLayer>& layers, const DesignMatrix& X,
                         std::span<const double> y, std::vector<double>* grad);
std::vector<double> mlp_flatten(const std::vector<MlpLayer>& layers);
void mlp_unflatten(std::span<const double> flat, std::vector<MlpLayer>& layers);

// ---------------------------------------------------------------------------
// Unified model handle + prediction + persistence
// ---------------------------------------------------------------------------

enum class RegressorKind { RandomForest, Gbdt, Mlp };
const char* regressor_kind_name(RegressorKind kind);
RegressorKind regressor_kind_from_name(const std::string& name);

struct RegressorModel {
    RegressorKind kind = RegressorKind::Gbdt;
    std::variant<ForestModel, GbdtModel, MlpModel> model;
    int input_dim = 0;
    uint64_t seed = 0;
    nlohmann::json train_config;  // parameter echo
    std::string encoder_id;
};

std::vector<double> predict(const ForestModel& model, const DesignMatrix& X);
std::vector<double> predict(const GbdtModel& model, const DesignMatrix& X);
std::vector<double> predict(const MlpModel& model, const DesignMatrix& X);
std::vector<double> predict(const RegressorModel& model, const DesignMatrix& X);

void save_model(const RegressorModel& model, const std::string& path);
RegressorModel load_model(const std::string& path);  // fails loudly on dim mismatch downstream

// Builds the typed params from a flat JSON object (unknown keys rejected) and
// fits the requested backbone.
RegressorModel fit_regressor(RegressorKind kind, const DesignMatrix& X, std::span<const double> y,
                             const nlohmann::json& params, uint64_t seed);

// ---------------------------------------------------------------------------
// Randomized hyperparameter search with temporally contiguous k-fold CV
// ---------------------------------------------------------------------------

enum class DistKind { Int, Real, LogReal, Categorical };

struct ParamDist {
    DistKind kind = DistKind::Real;
    double lo = 0.0, hi = 0.0;           // for Int/Real/LogReal
    std::vector<double> values;          // for Categorical

    bool operator==(const ParamDist&) const = default;
};

// Ordered so sampling is deterministic.
using SearchSpace = std::vector<std::pair<std::string, ParamDist>>;

SearchSpace default_search_space(RegressorKind kind);
nlohmann::json sample_params(const SearchSpace& space, Rng& rng);

struct SearchResult {
    nlohmann::json best_params;
    int best_index = 0;
    double best_score = 0.0;              // mean validation RMSE
    std::vector<double> cv_scores;        // one per candidate; +inf on fit failure
    RegressorModel model;                 // refit on the full training data
};

// Folds are contiguous blocks in row order (callers pass rows in temporal
// order), so no future row ever validates a past fold the wrong way round.
// Ties in score go to the earlier candidate.
SearchResult random_search(const SearchSpace& space, int n_iter, int folds,
                           const DesignMatrix& X, std::span<const double> y, RegressorKind kind,
                           uint64_t seed);

}  // namespace buzz
