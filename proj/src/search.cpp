#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "buzz/errors.hpp"
#include "buzz/log.hpp"
#include "buzz/metrics.hpp"
#include "buzz/regress.hpp"

namespace buzz {

using nlohmann::json;

const char* regressor_kind_name(RegressorKind kind) {
    switch (kind) {
        case RegressorKind::RandomForest: return "random_forest";
        case RegressorKind::Gbdt: return "gbdt";
        case RegressorKind::Mlp: return "mlp";
    }
    return "?";
}

RegressorKind regressor_kind_from_name(const std::string& name) {
    if (name == "random_forest" || name == "rf") return RegressorKind::RandomForest;
    if (name == "gbdt") return RegressorKind::Gbdt;
    if (name == "mlp") return RegressorKind::Mlp;
    throw ConfigError("unknown regressor kind '" + name + "'");
}

namespace {

void reject_unknown_keys(const json& params, const std::set<std::string>& allowed,
                         const char* kind) {
    for (auto it = params.begin(); it != params.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError(std::string("unknown ") + kind + " parameter '" + it.key() + "'");
    }
}

ForestParams forest_params_from_json(const json& params) {
    reject_unknown_keys(params,
                        {"n_estimators", "max_depth", "min_samples_leaf",
                         "max_features_fraction", "bootstrap"},
                        "random_forest");
    ForestParams p;
    p.n_estimators = params.value("n_estimators", p.n_estimators);
    p.max_depth = params.value("max_depth", p.max_depth);
    p.min_samples_leaf = params.value("min_samples_leaf", p.min_samples_leaf);
    p.max_features_fraction = params.value("max_features_fraction", p.max_features_fraction);
    if (params.contains("bootstrap")) {
        if (params["bootstrap"].is_boolean())
            p.bootstrap = params["bootstrap"].get<bool>();
        else
            p.bootstrap = params["bootstrap"].get<double>() != 0.0;
    }
    return p;
}

GbdtParams gbdt_params_from_json(const json& params) {
    reject_unknown_keys(params,
                        {"n_estimators", "learning_rate", "max_depth", "min_samples_leaf",
                         "subsample_fraction"},
                        "gbdt");
    GbdtParams p;
    p.n_estimators = params.value("n_estimators", p.n_estimators);
    p.learning_rate = params.value("learning_rate", p.learning_rate);
    p.max_depth = params.value("max_depth", p.max_depth);
    p.min_samples_leaf = params.value("min_samples_leaf", p.min_samples_leaf);
    p.subsample_fraction = params.value("subsample_fraction", p.subsample_fraction);
    return p;
}

MlpParams mlp_params_from_json(const json& params) {
    reject_unknown_keys(
        params, {"hidden", "n_layers", "hidden_width", "batch_size", "learning_rate", "epochs"},
        "mlp");
    MlpParams p;
    if (params.contains("hidden")) {
        p.hidden = params["hidden"].get<std::vector<int>>();
    } else if (params.contains("n_layers") || params.contains("hidden_width")) {
        const int n_layers = params.value("n_layers", 1);
        const int width = static_cast<int>(params.value("hidden_width", 64.0));
        if (n_layers < 0 || n_layers > 3) throw ConfigError("n_layers must lie in 0..3");
        p.hidden.assign(static_cast<size_t>(n_layers), width);
    }
    p.batch_size = static_cast<int>(params.value("batch_size", static_cast<double>(p.batch_size)));
    p.learning_rate = params.value("learning_rate", p.learning_rate);
    p.epochs = params.value("epochs", p.epochs);
    return p;
}

}  // namespace

RegressorModel fit_regressor(RegressorKind kind, const DesignMatrix& X, std::span<const double> y,
                             const json& params, uint64_t seed) {
    RegressorModel model;
    model.kind = kind;
    model.input_dim = X.cols;
    model.seed = seed;
    model.train_config = params;
    switch (kind) {
        case RegressorKind::RandomForest:
            model.model = fit_random_forest(X, y, forest_params_from_json(params), seed);
            break;
        case RegressorKind::Gbdt:
            model.model = fit_gbdt(X, y, gbdt_params_from_json(params), seed);
            break;
        case RegressorKind::Mlp:
            model.model = fit_mlp(X, y, mlp_params_from_json(params), seed);
            break;
    }
    return model;
}

std::vector<double> predict(const RegressorModel& model, const DesignMatrix& X) {
    if (X.cols != model.input_dim)
        throw DataError("prediction input has " + std::to_string(X.cols) +
                        " columns, model was trained with " + std::to_string(model.input_dim));
    for (double v : X.values)
        if (!std::isfinite(v)) throw DataError("prediction input contains a non-finite value");
    return std::visit([&](const auto& m) { return predict(m, X); }, model.model);
}

SearchSpace default_search_space(RegressorKind kind) {
    switch (kind) {
        case RegressorKind::RandomForest:
            return {{"n_estimators", {DistKind::Int, 100, 500, {}}},
                    {"max_depth", {DistKind::Int, 8, 24, {}}},
                    {"min_samples_leaf", {DistKind::Int, 1, 4, {}}},
                    {"max_features_fraction", {DistKind::Real, 0.1, 1.0, {}}}};
        case RegressorKind::Gbdt:
            return {{"n_estimators", {DistKind::Int, 100, 500, {}}},
                    {"learning_rate", {DistKind::LogReal, 0.001, 0.1, {}}},
                    {"max_depth", {DistKind::Int, 3, 8, {}}},
                    {"min_samples_leaf", {DistKind::Int, 1, 4, {}}},
                    {"subsample_fraction", {DistKind::Real, 0.6, 1.0, {}}}};
        case RegressorKind::Mlp:
            return {{"learning_rate", {DistKind::LogReal, 0.001, 0.01, {}}},
                    {"n_layers", {DistKind::Int, 1, 3, {}}},
                    {"hidden_width", {DistKind::Categorical, 0, 0, {64, 128, 256}}},
                    {"batch_size", {DistKind::Categorical, 0, 0, {32, 64, 128, 256}}}};
    }
    throw InternalError("unhandled regressor kind");
}

json sample_params(const SearchSpace& space, Rng& rng) {
    json params = json::object();
    for (const auto& [name, dist] : space) {
        switch (dist.kind) {
            case DistKind::Int:
                if (dist.lo > dist.hi) throw ConfigError("invalid int bounds for '" + name + "'");
                params[name] = rng.next_int(static_cast<int>(dist.lo), static_cast<int>(dist.hi));
                break;
            case DistKind::Real:
                if (dist.lo >= dist.hi) throw ConfigError("invalid real bounds for '" + name + "'");
                params[name] = rng.next_real(dist.lo, dist.hi);
                break;
            case DistKind::LogReal:
                if (!(dist.lo > 0.0 && dist.lo < dist.hi))
                    throw ConfigError("invalid log-uniform bounds for '" + name + "'");
                params[name] = rng.next_log_uniform(dist.lo, dist.hi);
                break;
            case DistKind::Categorical: {
                if (dist.values.empty())
                    throw ConfigError("empty categorical set for '" + name + "'");
                const double v =
                    dist.values[rng.next_below(static_cast<uint64_t>(dist.values.size()))];
                // integral categoricals (batch sizes, widths) stay integral
                if (v == std::floor(v))
                    params[name] = static_cast<long long>(v);
                else
                    params[name] = v;
                break;
            }
        }
    }
    return params;
}

namespace {

DesignMatrix gather_rows(const DesignMatrix& X, int begin, int end, bool invert) {
    DesignMatrix out;
    out.cols = X.cols;
    for (int r = 0; r < X.rows; ++r) {
        const bool in_block = r >= begin && r < end;
        if (in_block == invert) continue;
        out.values.insert(out.values.end(), X.row(r).begin(), X.row(r).end());
        ++out.rows;
    }
    return out;
}

std::vector<double> gather_targets(std::span<const double> y, int begin, int end, bool invert) {
    std::vector<double> out;
    for (int r = 0; r < static_cast<int>(y.size()); ++r) {
        const bool in_block = r >= begin && r < end;
        if (in_block == invert) continue;
        out.push_back(y[static_cast<size_t>(r)]);
    }
    return out;
}

}  // namespace

SearchResult random_search(const SearchSpace& space, int n_iter, int folds,
                           const DesignMatrix& X, std::span<const double> y, RegressorKind kind,
                           uint64_t seed) {
    if (n_iter < 1) throw ConfigError("n_iter must be >= 1");
    if (folds < 2) throw ConfigError("folds must be >= 2");
    if (X.rows < folds) throw DataError("not enough rows for " + std::to_string(folds) + " folds");
    if (space.empty()) throw ConfigError("search space is empty");

    // All candidates are drawn before any fitting so parallel evaluation could
    // never change the sampled sequence.
    Rng sampler = Rng::stream(seed, "search-sample");
    std::vector<json> candidates;
    candidates.reserve(static_cast<size_t>(n_iter));
    for (int i = 0; i < n_iter; ++i) candidates.push_back(sample_params(space, sampler));

    const int n = X.rows;
    SearchResult result;
    result.cv_scores.assign(static_cast<size_t>(n_iter),
                            std::numeric_limits<double>::infinity());

    for (int i = 0; i < n_iter; ++i) {
        double total = 0.0;
        bool failed = false;
        for (int j = 0; j < folds; ++j) {
            const int begin = static_cast<int>(static_cast<long long>(j) * n / folds);
            const int end = static_cast<int>(static_cast<long long>(j + 1) * n / folds);
            DesignMatrix X_train = gather_rows(X, begin, end, true);
            DesignMatrix X_val = gather_rows(X, begin, end, false);
            std::vector<double> y_train = gather_targets(y, begin, end, true);
            std::vector<double> y_val = gather_targets(y, begin, end, false);
            try {
                const uint64_t fold_seed =
                    mix64(seed ^ mix64(static_cast<uint64_t>(i) * 1000003ULL +
                                       static_cast<uint64_t>(j)));
                RegressorModel model = fit_regressor(kind, X_train, y_train, candidates[static_cast<size_t>(i)],
                                                     fold_seed);
                std::vector<double> pred = predict(model, X_val);
                total += rmse(pred, y_val);
            } catch (const Error& e) {
                log_warn("search candidate " + std::to_string(i) + " fold " + std::to_string(j) +
                         " failed: " + e.what());
                failed = true;
                break;
            }
        }
        if (!failed) result.cv_scores[static_cast<size_t>(i)] = total / folds;
    }

    result.best_index = 0;
    for (int i = 1; i < n_iter; ++i) {
        if (result.cv_scores[static_cast<size_t>(i)] <
            result.cv_scores[static_cast<size_t>(result.best_index)])
            result.best_index = i;
    }
    result.best_score = result.cv_scores[static_cast<size_t>(result.best_index)];
    if (!std::isfinite(result.best_score))
        throw DataError("every search candidate failed to fit");
    result.best_params = candidates[static_cast<size_t>(result.best_index)];
    result.model = fit_regressor(kind, X, y, result.best_params, seed);
    return result;
}

namespace {

json tree_to_json(const RegressionTree& tree) {
    json nodes = json::array();
    for (const auto& n : tree.nodes)
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    return nodes;
}

RegressionTree tree_from_json(const json& j) {
    RegressionTree tree;
    for (const auto& n : j) {
        tree.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                              n.at(3).get<int>(), n.at(4).get<double>()});
    }
    return tree;
}

}  // namespace

void save_model(const RegressorModel& model, const std::string& path) {
    json j{{"format", "buzz-model-v1"},
           {"kind", regressor_kind_name(model.kind)},
           {"input_dim", model.input_dim},
           {"seed", model.seed},
           {"train_config", model.train_config},
           {"encoder_id", model.encoder_id}};

    if (const auto* forest = std::get_if<ForestModel>(&model.model)) {
        json trees = json::array();
        for (const auto& t : forest->trees) trees.push_back(tree_to_json(t));
        j["model"] = {{"n_estimators", forest->params.n_estimators},
                      {"max_depth", forest->params.max_depth},
                      {"min_samples_leaf", forest->params.min_samples_leaf},
                      {"max_features_fraction", forest->params.max_features_fraction},
                      {"bootstrap", forest->params.bootstrap},
                      {"trees", trees}};
    } else if (const auto* gbdt = std::get_if<GbdtModel>(&model.model)) {
        json trees = json::array();
        for (const auto& t : gbdt->trees) trees.push_back(tree_to_json(t));
        j["model"] = {{"n_estimators", gbdt->params.n_estimators},
                      {"learning_rate", gbdt->params.learning_rate},
                      {"max_depth", gbdt->params.max_depth},
                      {"min_samples_leaf", gbdt->params.min_samples_leaf},
                      {"subsample_fraction", gbdt->params.subsample_fraction},
                      {"init_value", gbdt->init_value},
                      {"train_mse_curve", gbdt->train_mse_curve},
                      {"trees", trees}};
    } else if (const auto* mlp = std::get_if<MlpModel>(&model.model)) {
        json layers = json::array();
        for (const auto& l : mlp->layers)
            layers.push_back({{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
        j["model"] = {{"hidden", mlp->params.hidden},
                      {"batch_size", mlp->params.batch_size},
                      {"learning_rate", mlp->params.learning_rate},
                      {"epochs", mlp->params.epochs},
                      {"feat_mean", mlp->feat_mean},
                      {"feat_std", mlp->feat_std},
                      {"layers", layers}};
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write model file: " + path);
    out << j.dump() << '\n';
}

RegressorModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("model file is not valid JSON: " + path);
    if (j.value("format", "") != "buzz-model-v1")
        throw DataError("unsupported model format in " + path);

    RegressorModel model;
    model.kind = regressor_kind_from_name(j.at("kind").get<std::string>());
    model.input_dim = j.at("input_dim").get<int>();
    model.seed = j.at("seed").get<uint64_t>();
    model.train_config = j.value("train_config", json::object());
    model.encoder_id = j.value("encoder_id", "");

    const json& m = j.at("model");
    switch (model.kind) {
        case RegressorKind::RandomForest: {
            ForestModel forest;
            forest.params.n_estimators = m.at("n_estimators").get<int>();
            forest.params.max_depth = m.at("max_depth").get<int>();
            forest.params.min_samples_leaf = m.at("min_samples_leaf").get<int>();
            forest.params.max_features_fraction = m.at("max_features_fraction").get<double>();
            forest.params.bootstrap = m.at("bootstrap").get<bool>();
            forest.seed = model.seed;
            for (const auto& t : m.at("trees")) forest.trees.push_back(tree_from_json(t));
            model.model = std::move(forest);
            break;
        }
        case RegressorKind::Gbdt: {
            GbdtModel gbdt;
            gbdt.params.n_estimators = m.at("n_estimators").get<int>();
            gbdt.params.learning_rate = m.at("learning_rate").get<double>();
            gbdt.params.max_depth = m.at("max_depth").get<int>();
            gbdt.params.min_samples_leaf = m.at("min_samples_leaf").get<int>();
            gbdt.params.subsample_fraction = m.at("subsample_fraction").get<double>();
            gbdt.init_value = m.at("init_value").get<double>();
            gbdt.train_mse_curve = m.value("train_mse_curve", std::vector<double>{});
            gbdt.seed = model.seed;
            for (const auto& t : m.at("trees")) gbdt.trees.push_back(tree_from_json(t));
            model.model = std::move(gbdt);
            break;
        }
        case RegressorKind::Mlp: {
            MlpModel mlp;
            mlp.params.hidden = m.at("hidden").get<std::vector<int>>();
            mlp.params.batch_size = m.at("batch_size").get<int>();
            mlp.params.learning_rate = m.at("learning_rate").get<double>();
            mlp.params.epochs = m.at("epochs").get<int>();
            mlp.feat_mean = m.at("feat_mean").get<std::vector<double>>();
            mlp.feat_std = m.at("feat_std").get<std::vector<double>>();
            mlp.seed = model.seed;
            for (const auto& l : m.at("layers")) {
                MlpLayer layer;
                layer.in = l.at("in").get<int>();
                layer.out = l.at("out").get<int>();
                layer.w = l.at("w").get<std::vector<double>>();
                layer.b = l.at("b").get<std::vector<double>>();
                mlp.layers.push_back(std::move(layer));
            }
            model.model = std::move(mlp);
            break;
        }
    }
    return model;
}

}  // namespace buzz
