#include <algorithm>
#include <cmath>
#include <numeric>

#include "buzz/errors.hpp"
#include "buzz/regress.hpp"

namespace buzz {

namespace {

// Forward/backward over a row subset. Gradients are of the mean squared error
// over the subset, laid out layer by layer (w then b), matching mlp_flatten.
double loss_and_grad_rows(const std::vector<MlpLayer>& layers, const DesignMatrix& X,
                          std::span<const double> y, std::span<const int> rows,
                          std::vector<double>* grad) {
    const size_t n_layers = layers.size();
    const double inv_b = 1.0 / static_cast<double>(rows.size());

    size_t n_params = 0;
    for (const auto& l : layers) n_params += l.w.size() + l.b.size();
    if (grad) grad->assign(n_params, 0.0);

    // activations[l] = input to layer l; activations[n_layers] = output
    std::vector<std::vector<double>> activations(n_layers + 1);
    std::vector<std::vector<double>> deltas(n_layers + 1);

    double loss = 0.0;
    for (int row : rows) {
        auto x = X.row(row);
        activations[0].assign(x.begin(), x.end());
        for (size_t l = 0; l < n_layers; ++l) {
            const MlpLayer& layer = layers[l];
            auto& out = activations[l + 1];
            out.assign(static_cast<size_t>(layer.out), 0.0);
            for (int o = 0; o < layer.out; ++o) {
                double z = layer.b[static_cast<size_t>(o)];
                const double* wrow = layer.w.data() + static_cast<size_t>(o) * layer.in;
                for (int i = 0; i < layer.in; ++i) z += wrow[i] * activations[l][static_cast<size_t>(i)];
                const bool last = l + 1 == n_layers;
                out[static_cast<size_t>(o)] = last ? z : (z > 0.0 ? z : 0.0);
            }
        }
        const double pred = activations[n_layers][0];
        const double err = pred - y[static_cast<size_t>(row)];
        loss += err * err * inv_b;
        if (!grad) continue;

        deltas[n_layers].assign(1, 2.0 * err * inv_b);
        size_t offset = n_params;
        for (size_t l = n_layers; l-- > 0;) {
            const MlpLayer& layer = layers[l];
            offset -= layer.w.size() + layer.b.size();
            double* gw = grad->data() + offset;
            double* gb = gw + layer.w.size();
            auto& delta_out = deltas[l + 1];
            auto& delta_in = deltas[l];
            delta_in.assign(static_cast<size_t>(layer.in), 0.0);
            for (int o = 0; o < layer.out; ++o) {
                const double dz = delta_out[static_cast<size_t>(o)];
                if (dz == 0.0) continue;
                const double* wrow = layer.w.data() + static_cast<size_t>(o) * layer.in;
                double* gwrow = gw + static_cast<size_t>(o) * layer.in;
                for (int i = 0; i < layer.in; ++i) {
                    gwrow[i] += dz * activations[l][static_cast<size_t>(i)];
                    delta_in[static_cast<size_t>(i)] += dz * wrow[i];
                }
                gb[o] += dz;
            }
            if (l > 0) {
                // ReLU gate: layer l's input is layer l-1's rectified output
                for (int i = 0; i < layer.in; ++i)
                    if (activations[l][static_cast<size_t>(i)] <= 0.0)
                        delta_in[static_cast<size_t>(i)] = 0.0;
            }
        }
    }
    return loss;
}

}  // namespace

double mlp_loss_and_grad(const std::vector<MlpLayer>& layers, const DesignMatrix& X,
                         std::span<const double> y, std::vector<double>* grad) {
    std::vector<int> rows(static_cast<size_t>(X.rows));
    std::iota(rows.begin(), rows.end(), 0);
    return loss_and_grad_rows(layers, X, y, rows, grad);
}

std::vector<double> mlp_flatten(const std::vector<MlpLayer>& layers) {
    std::vector<double> flat;
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.w.begin(), l.w.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    }
    return flat;
}

void mlp_unflatten(std::span<const double> flat, std::vector<MlpLayer>& layers) {
    size_t pos = 0;
    for (auto& l : layers) {
        std::copy(flat.begin() + pos, flat.begin() + pos + l.w.size(), l.w.begin());
        pos += l.w.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + l.b.size(), l.b.begin());
        pos += l.b.size();
    }
    if (pos != flat.size()) throw InternalError("flat parameter size mismatch");
}

MlpModel fit_mlp(const DesignMatrix& X, std::span<const double> y, const MlpParams& params,
                 uint64_t seed) {
    if (X.rows < 1) throw DataError("mlp needs at least 1 sample");
    if (X.rows != static_cast<int>(y.size()))
        throw DataError("target length does not match matrix rows");
    if (params.hidden.size() > 3) throw ConfigError("at most 3 hidden layers are supported");
    for (int width : params.hidden)
        if (width < 1) throw ConfigError("hidden layer widths must be >= 1");
    if (params.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (params.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(params.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");

    const int n = X.rows;
    const int d = X.cols;

    MlpModel model;
    model.params = params;
    model.seed = seed;

    // Standardization statistics come from the training rows only and travel
    // with the model.
    model.feat_mean.assign(static_cast<size_t>(d), 0.0);
    model.feat_std.assign(static_cast<size_t>(d), 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) model.feat_mean[static_cast<size_t>(c)] += X.at(r, c);
    for (double& m : model.feat_mean) m /= static_cast<double>(n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) {
            const double diff = X.at(r, c) - model.feat_mean[static_cast<size_t>(c)];
            model.feat_std[static_cast<size_t>(c)] += diff * diff;
        }
    for (double& s : model.feat_std) {
        s = std::sqrt(s / static_cast<double>(n));
        if (s == 0.0) s = 1.0;  // constant feature
    }

    DesignMatrix Xs;
    Xs.rows = n;
    Xs.cols = d;
    Xs.values.resize(static_cast<size_t>(n) * d);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c)
            Xs.values[static_cast<size_t>(r) * d + c] =
                (X.at(r, c) - model.feat_mean[static_cast<size_t>(c)]) /
                model.feat_std[static_cast<size_t>(c)];

    Rng rng = Rng::stream(seed, "mlp");
    std::vector<int> dims{d};
    for (int width : params.hidden) dims.push_back(width);
    dims.push_back(1);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        MlpLayer layer;
        layer.in = dims[l];
        layer.out = dims[l + 1];
        const double scale = std::sqrt(2.0 / static_cast<double>(layer.in));
        layer.w.resize(static_cast<size_t>(layer.in) * layer.out);
        for (double& w : layer.w) w = rng.next_normal() * scale;
        layer.b.assign(static_cast<size_t>(layer.out), 0.0);
        model.layers.push_back(std::move(layer));
    }

    size_t n_params = 0;
    for (const auto& l : model.layers) n_params += l.w.size() + l.b.size();
    std::vector<double> adam_m(n_params, 0.0), adam_v(n_params, 0.0), grad;
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    const int batch = std::min(params.batch_size, n);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        for (int start = 0; start < n; start += batch) {
            const int end = std::min(start + batch, n);
            std::span<const int> rows(order.data() + start, static_cast<size_t>(end - start));
            const double loss = loss_and_grad_rows(model.layers, Xs, y, rows, &grad);
            if (!std::isfinite(loss))
                throw InternalError("mlp training diverged (non-finite loss) at epoch " +
                                    std::to_string(epoch));
            ++step;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            size_t idx = 0;
            for (auto& layer : model.layers) {
                auto update = [&](double& param) {
                    const double g = grad[idx];
                    adam_m[idx] = beta1 * adam_m[idx] + (1.0 - beta1) * g;
                    adam_v[idx] = beta2 * adam_v[idx] + (1.0 - beta2) * g * g;
                    param -= params.learning_rate * (adam_m[idx] / bc1) /
                             (std::sqrt(adam_v[idx] / bc2) + eps);
                    ++idx;
                };
                for (double& w : layer.w) update(w);
                for (double& b : layer.b) update(b);
            }
        }
    }
    return model;
}

std::vector<double> predict(const MlpModel& model, const DesignMatrix& X) {
    const int d = static_cast<int>(model.feat_mean.size());
    std::vector<double> out;
    out.reserve(static_cast<size_t>(X.rows));
    std::vector<double> a, next;
    for (int r = 0; r < X.rows; ++r) {
        a.assign(static_cast<size_t>(d), 0.0);
        for (int c = 0; c < d; ++c)
            a[static_cast<size_t>(c)] = (X.at(r, c) - model.feat_mean[static_cast<size_t>(c)]) /
                                        model.feat_std[static_cast<size_t>(c)];
        for (size_t l = 0; l < model.layers.size(); ++l) {
            const MlpLayer& layer = model.layers[l];
            next.assign(static_cast<size_t>(layer.out), 0.0);
            for (int o = 0; o < layer.out; ++o) {
                double z = layer.b[static_cast<size_t>(o)];
                const double* wrow = layer.w.data() + static_cast<size_t>(o) * layer.in;
                for (int i = 0; i < layer.in; ++i) z += wrow[i] * a[static_cast<size_t>(i)];
                const bool last = l + 1 == model.layers.size();
                next[static_cast<size_t>(o)] = last ? z : (z > 0.0 ? z : 0.0);
            }
            a.swap(next);
        }
        out.push_back(a[0]);
    }
    return out;
}

}  // namespace buzz
