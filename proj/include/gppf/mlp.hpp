#pragma once

// Fully connected feed-forward baseline: GELU hidden layers, linear output,
// MSE loss, Adam with decoupled weight decay and input-noise augmentation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gppf/common.hpp"
#include "gppf/normalize.hpp"

namespace gppf {

struct MlpConfig {
    /// Layer widths including input and output, e.g. {2D, 2D, D, D}.
    std::vector<int> widths;
    double learning_rate = 1e-4;
    int batch_size = 32;
    int epochs = 400;
    double weight_decay = 1e-4;
    /// Std of Gaussian noise added to standardized training inputs.
    double input_noise = 0.05;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;

    /// The default architecture for a feeder with D phase-nodes.
    static MlpConfig for_feeder(int d) {
        MlpConfig c;
        c.widths = {2 * d, 2 * d, d, d};
        return c;
    }

    void validate() const {
        if (widths.size() < 2) throw ArgumentError("MLP needs at least an input and an output width");
        for (int w : widths)
            if (w <= 0) throw ArgumentError("MLP widths must be positive");
        if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
        if (epochs < 1) throw ArgumentError("epochs must be at least 1");
        if (batch_size < 1) throw ArgumentError("batch size must be at least 1");
        if (!(weight_decay >= 0.0) || !(input_noise >= 0.0)) throw ArgumentError("decay and noise must be nonnegative");
    }
};

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2))); }

inline double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
    const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    return cdf + x * pdf;
}

struct MlpLayer {
    Eigen::MatrixXd weight;  ///< out x in
    Eigen::VectorXd bias;
};

struct MlpModel {
    MlpConfig config;
    std::vector<MlpLayer> layers;
    InputStandardizer input;
    TargetScaler target;
    /// Clean full-data training MSE in normalized target units: entry 0 is
    /// before the first update, entry k after epoch k.
    std::vector<double> history;

    /// Zero-weight network with identity normalization for the given config.
    static MlpModel zeros(const MlpConfig& config) {
        config.validate();
        MlpModel m;
        m.config = config;
        for (std::size_t l = 0; l + 1 < config.widths.size(); ++l)
            m.layers.push_back({Eigen::MatrixXd::Zero(config.widths[l + 1], config.widths[l]),
                                Eigen::VectorXd::Zero(config.widths[l + 1])});
        m.input.mean = Eigen::VectorXd::Zero(config.widths.front());
        m.input.scale = Eigen::VectorXd::Ones(config.widths.front());
        m.input.active.resize(config.widths.front());
        std::iota(m.input.active.begin(), m.input.active.end(), 0);
        m.target.mean = Eigen::VectorXd::Zero(config.widths.back());
        return m;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    Eigen::VectorXd flat_parameters() const {
        Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
        Eigen::Index k = 0;
        for (const auto& l : layers) {
            out.segment(k, l.weight.size()) = l.weight.reshaped();
            k += l.weight.size();
            out.segment(k, l.bias.size()) = l.bias;
            k += l.bias.size();
        }
        return out;
    }

    void set_flat_parameters(const Eigen::VectorXd& p) {
        if (p.size() != static_cast<Eigen::Index>(parameter_count())) throw DimensionError("parameter vector length");
        Eigen::Index k = 0;
        for (auto& l : layers) {
            l.weight.reshaped() = p.segment(k, l.weight.size());
            k += l.weight.size();
            l.bias = p.segment(k, l.bias.size());
            k += l.bias.size();
        }
    }

    /// Forward pass in normalized space; columns are samples.
    Eigen::MatrixXd forward_normalized(const Eigen::MatrixXd& xt) const {
        Eigen::MatrixXd a = xt;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            Eigen::MatrixXd z = (layers[l].weight * a).colwise() + layers[l].bias;
            a = l + 1 < layers.size() ? Eigen::MatrixXd(z.unaryExpr([](double v) { return gelu(v); })) : z;
        }
        return a;
    }

    nlohmann::json to_json() const {
        auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
        nlohmann::json j;
        j["format"] = "gppf-mlp";
        j["version"] = 1;
        j["widths"] = config.widths;
        j["input_mean"] = vec(input.mean);
        j["input_scale"] = vec(input.scale);
        j["active"] = input.active;
        j["target_mean"] = vec(target.mean);
        j["target_scale"] = target.scale;
        j["parameters"] = vec(flat_parameters());
        j["history"] = history;
        return j;
    }

    static MlpModel from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "gppf-mlp" || j.value("version", 0) != 1)
            throw IoError("not a version-1 MLP snapshot");
        auto vec = [](const nlohmann::json& a) {
            auto v = a.get<std::vector<double>>();
            return Eigen::VectorXd(Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
        MlpConfig c;
        c.widths = j.at("widths").get<std::vector<int>>();
        MlpModel m = zeros(c);
        m.input.mean = vec(j.at("input_mean"));
        m.input.scale = vec(j.at("input_scale"));
        m.input.active = j.at("active").get<std::vector<int>>();
        m.target.mean = vec(j.at("target_mean"));
        m.target.scale = j.at("target_scale").get<double>();
        m.set_flat_parameters(vec(j.at("parameters")));
        m.history = j.at("history").get<std::vector<double>>();
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write '" + path + "'");
        out << to_json().dump();
    }

    static MlpModel load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        return from_json(nlohmann::json::parse(in));
    }
};

/// Mean squared error over all entries and its gradient with respect to the
/// flattened parameters (same layout as `flat_parameters`). Inputs and
/// targets are normalized, one sample per column.
inline double mlp_loss_and_gradient(const MlpModel& model, const Eigen::MatrixXd& xt, const Eigen::MatrixXd& yt,
                                    Eigen::VectorXd* grad) {
    const std::size_t nl = model.layers.size();
    std::vector<Eigen::MatrixXd> acts(nl + 1), pre(nl);
    acts[0] = xt;
    for (std::size_t l = 0; l < nl; ++l) {
        pre[l] = (model.layers[l].weight * acts[l]).colwise() + model.layers[l].bias;
        acts[l + 1] = l + 1 < nl ? Eigen::MatrixXd(pre[l].unaryExpr([](double v) { return gelu(v); })) : pre[l];
    }
    const Eigen::MatrixXd diff = acts[nl] - yt;
    const double count = static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() / count;
    if (!grad) return loss;

    grad->resize(static_cast<Eigen::Index>(model.parameter_count()));
    std::vector<Eigen::Index> offset(nl);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < nl; ++l) {
        offset[l] = k;
        k += model.layers[l].weight.size() + model.layers[l].bias.size();
    }
    Eigen::MatrixXd delta = (2.0 / count) * diff;
    for (std::size_t l = nl; l-- > 0;) {
        if (l + 1 < nl) delta = delta.cwiseProduct(pre[l].unaryExpr([](double v) { return gelu_derivative(v); }));
        const Eigen::MatrixXd gw = delta * acts[l].transpose();
        grad->segment(offset[l], gw.size()) = gw.reshaped();
        grad->segment(offset[l] + gw.size(), model.layers[l].bias.size()) = delta.rowwise().sum();
        if (l > 0) delta = model.layers[l].weight.transpose() * delta;
    }
    return loss;
}

/// Trains on rows of `x` (n x 2D) and `y` (n x D) for the configured epochs
/// over seeded shuffled mini-batches.
inline MlpModel train_mlp(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const MlpConfig& config) {
    config.validate();
    if (x.rows() < 1) throw ArgumentError("MLP training needs at least one row");
    if (x.rows() != y.rows()) throw DimensionError("inputs and targets differ in row count");
    if (x.cols() != config.widths.front() || y.cols() != config.widths.back())
        throw DimensionError("data shape does not match the configured input/output widths");

    std::mt19937_64 rng(config.seed);
    MlpModel m = MlpModel::zeros(config);
    for (auto& layer : m.layers) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = u(rng);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = u(rng);
    }
    m.input = InputStandardizer::fit(x, true, true);
    m.target = TargetScaler::fit(y, true, true);
    const Eigen::MatrixXd xt = m.input.transform_full(x).transpose();
    const Eigen::MatrixXd yt = m.target.transform(y).transpose();

    const Eigen::Index n = x.rows();
    const std::size_t np = m.parameter_count();
    Eigen::VectorXd params = m.flat_parameters();
    Eigen::VectorXd mom = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    Eigen::VectorXd vel = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    // Decay applies to weights only.
    Eigen::VectorXd decay_mask = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    {
        Eigen::Index k = 0;
        for (const auto& l : m.layers) {
            decay_mask.segment(k, l.weight.size()).setOnes();
            k += l.weight.size() + l.bias.size();
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::normal_distribution<double> noise(0.0, 1.0);
    Eigen::VectorXd grad;
    long step = 0;
    m.history.push_back(mlp_loss_and_gradient(m, xt, yt, nullptr));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += config.batch_size) {
            const Eigen::Index bs = std::min<Eigen::Index>(config.batch_size, n - start);
            Eigen::MatrixXd xb(xt.rows(), bs), yb(yt.rows(), bs);
            for (Eigen::Index c = 0; c < bs; ++c) {
                xb.col(c) = xt.col(order[static_cast<std::size_t>(start + c)]);
                yb.col(c) = yt.col(order[static_cast<std::size_t>(start + c)]);
            }
            if (config.input_noise > 0.0)
                for (Eigen::Index i = 0; i < xb.size(); ++i) xb.data()[i] += config.input_noise * noise(rng);

            const double loss = mlp_loss_and_gradient(m, xb, yb, &grad);
            if (!std::isfinite(loss) || !grad.allFinite())
                throw NumericalError("MLP loss became non-finite at epoch " + std::to_string(epoch + 1) +
                                     "; lower the learning rate or check input normalization");
            ++step;
            mom = config.adam_beta1 * mom + (1.0 - config.adam_beta1) * grad;
            vel = config.adam_beta2 * vel + (1.0 - config.adam_beta2) * grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
            params.array() -= config.learning_rate * config.weight_decay * decay_mask.array() * params.array();
            params.array() -= config.learning_rate * (mom.array() / c1) / ((vel.array() / c2).sqrt() + config.adam_epsilon);
            m.set_flat_parameters(params);
        }
        const double epoch_loss = mlp_loss_and_gradient(m, xt, yt, nullptr);
        if (!std::isfinite(epoch_loss))
            throw NumericalError("MLP loss became non-finite at epoch " + std::to_string(epoch + 1));
        m.history.push_back(epoch_loss);
    }
    return m;
}

/// Deterministic forward pass (no input noise), de-normalized; m x D.
inline Eigen::MatrixXd predict_mlp(const MlpModel& model, const Eigen::MatrixXd& queries) {
    if (queries.cols() != model.config.widths.front())
        throw DimensionError("query has " + std::to_string(queries.cols()) + " columns, expected " +
                             std::to_string(model.config.widths.front()));
    const Eigen::MatrixXd out = model.forward_normalized(model.input.transform_full(queries).transpose());
    return model.target.inverse(out.transpose());
}

}  // namespace gppf
