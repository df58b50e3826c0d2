#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "buzz/errors.hpp"
#include "buzz/regress.hpp"

namespace buzz {

double RegressionTree::predict_row(std::span<const double> x) const {
    int node = 0;
    while (!nodes[static_cast<size_t>(node)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<size_t>(node)];
        node = x[static_cast<size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<size_t>(node)].value;
}

FeatureOrderCache::FeatureOrderCache(const DesignMatrix& X) {
    orders_.resize(static_cast<size_t>(X.cols));
    for (int f = 0; f < X.cols; ++f) {
        auto& order = orders_[static_cast<size_t>(f)];
        order.resize(static_cast<size_t>(X.rows));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double va = X.at(a, f), vb = X.at(b, f);
            if (va != vb) return va < vb;
            return a < b;
        });
    }
}

namespace {

struct NodeStats {
    long long cnt = 0;
    double sum = 0.0;
};

struct SlotState {
    long long left_cnt = 0;
    double left_sum = 0.0;
    double prev_value = 0.0;
    bool started = false;
};

struct BestSplit {
    double score = 0.0;  // sum_l^2/n_l + sum_r^2/n_r; parent baseline pre-filled
    int feature = -1;
    double threshold = 0.0;
};

}  // namespace

RegressionTree fit_tree_rows(const DesignMatrix& X, std::span<const double> y,
                             std::span<const int> rows, const TreeParams& params, Rng& rng,
                             const FeatureOrderCache* order_cache) {
    if (X.rows == 0 || X.cols == 0) throw DataError("cannot fit a tree on an empty matrix");
    if (rows.empty()) throw DataError("cannot fit a tree on an empty row set");
    if (params.max_depth < 0) throw ConfigError("max_depth must be non-negative");
    if (params.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");

    const int n = X.rows;
    const int d = X.cols;

    std::vector<int> weight(static_cast<size_t>(n), 0);
    for (int r : rows) {
        if (r < 0 || r >= n) throw InternalError("tree row index out of range");
        ++weight[static_cast<size_t>(r)];
    }

    std::unique_ptr<FeatureOrderCache> local_order;
    if (!order_cache) {
        local_order = std::make_unique<FeatureOrderCache>(X);
        order_cache = local_order.get();
    }

    RegressionTree tree;
    std::vector<int> row_node(static_cast<size_t>(n), -1);
    std::vector<NodeStats> stats;

    tree.nodes.push_back({});
    stats.push_back({});
    for (int r = 0; r < n; ++r) {
        if (weight[static_cast<size_t>(r)] > 0) {
            row_node[static_cast<size_t>(r)] = 0;
            stats[0].cnt += weight[static_cast<size_t>(r)];
            stats[0].sum += weight[static_cast<size_t>(r)] * y[static_cast<size_t>(r)];
        }
    }

    std::vector<int> frontier{0};
    std::vector<int> node_slot;
    std::vector<int> feat_scratch(static_cast<size_t>(d));
    std::iota(feat_scratch.begin(), feat_scratch.end(), 0);

    const long long msl = params.min_samples_leaf;

    for (int depth = 0; !frontier.empty(); ++depth) {
        const int n_slots = static_cast<int>(frontier.size());
        node_slot.assign(tree.nodes.size(), -1);

        std::vector<BestSplit> best(static_cast<size_t>(n_slots));
        std::vector<char> splittable(static_cast<size_t>(n_slots), 0);
        for (int s = 0; s < n_slots; ++s) {
            const int node = frontier[static_cast<size_t>(s)];
            node_slot[static_cast<size_t>(node)] = s;
            const NodeStats& st = stats[static_cast<size_t>(node)];
            best[static_cast<size_t>(s)].score = st.sum * st.sum / static_cast<double>(st.cnt);
            splittable[static_cast<size_t>(s)] =
                depth < params.max_depth && st.cnt >= 2 * msl ? 1 : 0;
        }

        // Per-split random feature subsets, sampled in node-id order so the
        // result is independent of the feature scan order below.
        std::vector<char> use_feature;
        const bool subsetting = params.features_per_split > 0 && params.features_per_split < d;
        if (subsetting) {
            use_feature.assign(static_cast<size_t>(n_slots) * d, 0);
            for (int s = 0; s < n_slots; ++s) {
                if (!splittable[static_cast<size_t>(s)]) continue;
                for (int k = 0; k < params.features_per_split; ++k) {
                    const int j =
                        k + static_cast<int>(rng.next_below(static_cast<uint64_t>(d - k)));
                    std::swap(feat_scratch[static_cast<size_t>(k)],
                              feat_scratch[static_cast<size_t>(j)]);
                    use_feature[static_cast<size_t>(s) * d +
                                static_cast<size_t>(feat_scratch[static_cast<size_t>(k)])] = 1;
                }
            }
        }

        std::vector<SlotState> slot(static_cast<size_t>(n_slots));
        for (int f = 0; f < d; ++f) {
            for (auto& s : slot) s = SlotState{};
            for (int r : order_cache->order(f)) {
                const int node = row_node[static_cast<size_t>(r)];
                if (node < 0) continue;
                const int s = node_slot[static_cast<size_t>(node)];
                if (s < 0 || !splittable[static_cast<size_t>(s)]) continue;
                if (subsetting && !use_feature[static_cast<size_t>(s) * d + f]) continue;

                SlotState& st = slot[static_cast<size_t>(s)];
                const double v = X.at(r, f);
                const NodeStats& ns = stats[static_cast<size_t>(frontier[static_cast<size_t>(s)])];
                if (st.started && v > st.prev_value && st.left_cnt >= msl &&
                    ns.cnt - st.left_cnt >= msl) {
                    const double right_sum = ns.sum - st.left_sum;
                    const double score =
                        st.left_sum * st.left_sum / static_cast<double>(st.left_cnt) +
                        right_sum * right_sum / static_cast<double>(ns.cnt - st.left_cnt);
                    BestSplit& b = best[static_cast<size_t>(s)];
                    if (score > b.score) {
                        b.score = score;
                        b.feature = f;
                        b.threshold = (st.prev_value + v) / 2.0;
                    }
                }
                const int w = weight[static_cast<size_t>(r)];
                st.left_cnt += w;
                st.left_sum += w * y[static_cast<size_t>(r)];
                st.prev_value = v;
                st.started = true;
            }
        }

        // Materialize splits (children in frontier order) or finalize leaves.
        std::vector<int> next_frontier;
        for (int s = 0; s < n_slots; ++s) {
            const int node = frontier[static_cast<size_t>(s)];
            const BestSplit& b = best[static_cast<size_t>(s)];
            const NodeStats& st = stats[static_cast<size_t>(node)];
            if (b.feature < 0) {
                TreeNode& leaf = tree.nodes[static_cast<size_t>(node)];
                leaf.feature = -1;
                leaf.value = st.sum / static_cast<double>(st.cnt);
                continue;
            }
            const int left = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({});
            stats.push_back({});
            const int right = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({});
            stats.push_back({});
            TreeNode& parent = tree.nodes[static_cast<size_t>(node)];
            parent.feature = b.feature;
            parent.threshold = b.threshold;
            parent.left = left;
            parent.right = right;
            next_frontier.push_back(left);
            next_frontier.push_back(right);
        }

        // Route rows to their children and accumulate child stats.
        if (!next_frontier.empty()) {
            for (int r = 0; r < n; ++r) {
                const int node = row_node[static_cast<size_t>(r)];
                if (node < 0) continue;
                const TreeNode& parent = tree.nodes[static_cast<size_t>(node)];
                if (parent.is_leaf()) continue;
                const int child = X.at(r, parent.feature) <= parent.threshold ? parent.left
                                                                              : parent.right;
                row_node[static_cast<size_t>(r)] = child;
                const int w = weight[static_cast<size_t>(r)];
                stats[static_cast<size_t>(child)].cnt += w;
                stats[static_cast<size_t>(child)].sum += w * y[static_cast<size_t>(r)];
            }
        } else {
            break;
        }
        frontier = std::move(next_frontier);
    }

    return tree;
}

RegressionTree fit_tree(const DesignMatrix& X, std::span<const double> y, const TreeParams& params,
                        Rng& rng) {
    if (X.rows != static_cast<int>(y.size()))
        throw DataError("target length does not match matrix rows");
    std::vector<int> rows(static_cast<size_t>(X.rows));
    std::iota(rows.begin(), rows.end(), 0);
    return fit_tree_rows(X, y, rows, params, rng);
}

}  // namespace buzz
