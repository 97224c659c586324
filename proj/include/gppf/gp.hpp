#pragma once

// Exact multi-output Gaussian-process regression with an ARD squared
// exponential kernel. All outputs share one kernel and one Cholesky factor;
// hyperparameters maximize the summed per-output log marginal likelihood.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gppf/common.hpp"
#include "gppf/normalize.hpp"
#include "gppf/optim.hpp"

namespace gppf {

/// Kernel hyperparameters. Lengthscales enter the kernel as
/// exp(-sum_d (a_d - b_d)^2 / (2 l_d)), i.e. each l_d scales a squared distance.
struct KernelParams {
    Eigen::VectorXd lengthscales;
    double signal_variance = 1.0;
    double noise_variance = 1.0;
};

/// ARD squared exponential (RBF) kernel.
struct ArdRbfKernel {
    static constexpr const char* name = "ard-rbf";

    static double eval(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b,
                       const KernelParams& p) {
        return p.signal_variance * std::exp(-0.5 * ((a - b).array().square() / p.lengthscales.array()).sum());
    }

    /// Signal part of the Gram matrix between the rows of `a` and `b`.
    static Eigen::MatrixXd cross(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const KernelParams& p) {
        const Eigen::ArrayXd inv = p.lengthscales.array().rsqrt();
        const Eigen::MatrixXd za = a * inv.matrix().asDiagonal();
        const Eigen::MatrixXd zb = b * inv.matrix().asDiagonal();
        Eigen::MatrixXd d2 = (-2.0 * za * zb.transpose()).eval();
        d2.colwise() += za.rowwise().squaredNorm();
        d2.rowwise() += zb.rowwise().squaredNorm().transpose();
        return p.signal_variance * (-0.5 * d2.array().max(0.0)).exp().matrix();
    }

    static Eigen::MatrixXd gram(const Eigen::MatrixXd& x, const KernelParams& p) {
        Eigen::MatrixXd k = cross(x, x, p);
        k.triangularView<Eigen::StrictlyLower>() = k.transpose().eval();
        k.diagonal().setConstant(p.signal_variance);
        return k;
    }

    static double prior_variance(const KernelParams& p) { return p.signal_variance; }

    /// Gradient of sum_ij w_ij k_ij with respect to [log l_1..log l_d, log signal_variance],
    /// given the signal Gram matrix `k` and a symmetric weight matrix `w`.
    static Eigen::VectorXd weighted_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& k,
                                             const Eigen::MatrixXd& w, const KernelParams& p) {
        const Eigen::Index d = x.cols();
        Eigen::VectorXd g(d + 1);
        const Eigen::MatrixXd wk = w.cwiseProduct(k);
        const Eigen::VectorXd r = wk.rowwise().sum();
        // sum_ij wk_ij (x_id - x_jd)^2 = 2 sum_i x_id^2 r_i - 2 x_d' wk x_d
        const Eigen::MatrixXd wx = wk * x;
        for (Eigen::Index j = 0; j < d; ++j) {
            const double s = 2.0 * x.col(j).array().square().matrix().dot(r) - 2.0 * x.col(j).dot(wx.col(j));
            g[j] = s / (2.0 * p.lengthscales[j]);
        }
        g[d] = wk.sum();
        return g;
    }
};

template <class K>
concept GpKernel = requires(const Eigen::MatrixXd& x, const KernelParams& p) {
    { K::gram(x, p) } -> std::convertible_to<Eigen::MatrixXd>;
    { K::cross(x, x, p) } -> std::convertible_to<Eigen::MatrixXd>;
    { K::prior_variance(p) } -> std::convertible_to<double>;
    { K::weighted_gradient(x, x, x, p) } -> std::convertible_to<Eigen::VectorXd>;
};

inline void check_kernel_params(const KernelParams& p, Eigen::Index dim, bool allow_zero_noise = false) {
    if (p.lengthscales.size() != dim)
        throw DimensionError("kernel has " + std::to_string(p.lengthscales.size()) + " lengthscales for " +
                             std::to_string(dim) + " input dimensions");
    if (!(p.lengthscales.array() > 0.0).all() || !p.lengthscales.allFinite())
        throw ArgumentError("lengthscales must be positive and finite");
    if (!(p.signal_variance > 0.0)) throw ArgumentError("signal variance must be positive");
    if (allow_zero_noise ? !(p.noise_variance >= 0.0) : !(p.noise_variance > 0.0))
        throw ArgumentError("noise variance must be positive");
}

/// sigma_s^2 * exp(-sum_d (a_d - b_d)^2 / (2 l_d)).
inline double kernel_eval(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const KernelParams& params) {
    if (a.size() != b.size()) throw DimensionError("kernel arguments differ in dimension");
    check_kernel_params(params, a.size());
    return ArdRbfKernel::eval(a, b, params);
}

// ---------------------------------------------------------------------------
// Marginal likelihood
// ---------------------------------------------------------------------------

/// Value and gradient with respect to [log l_1..log l_d, log sigma_s^2, log sigma_eps^2].
struct LmlResult {
    double value = 0.0;
    Eigen::VectorXd gradient;
};

namespace detail {

struct Factorization {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double jitter = 0.0;
};

/// Cholesky of gram + (noise + jitter) I, escalating jitter x10 from
/// `jitter` up to `max_jitter`.
inline Factorization factorize(const Eigen::MatrixXd& gram, double noise, double jitter, double max_jitter) {
    const Eigen::Index n = gram.rows();
    for (double j = jitter;; j = (j > 0.0 ? j * 10.0 : 1e-10)) {
        Eigen::MatrixXd k = gram;
        k.diagonal().array() += noise + j;
        Factorization f{Eigen::LLT<Eigen::MatrixXd>(k), j};
        if (f.llt.info() == Eigen::Success && (f.llt.matrixLLT().diagonal().array() > 0.0).all()) return f;
        if (j >= max_jitter * (1.0 - 1e-12) || n == 0)
            throw NumericalError("Cholesky factorization failed with jitter up to " + format_number(max_jitter, 3));
    }
}

template <GpKernel Kernel>
LmlResult lml_from_factor(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const KernelParams& p,
                          const Eigen::MatrixXd& gram, const Factorization& f, bool with_gradient) {
    const Eigen::Index n = x.rows(), d = x.cols();
    const double outputs = static_cast<double>(y.cols());
    const Eigen::MatrixXd alpha = f.llt.solve(y);
    LmlResult r;
    const double logdet_half = f.llt.matrixLLT().diagonal().array().log().sum();
    r.value = -0.5 * y.cwiseProduct(alpha).sum() - outputs * logdet_half -
              0.5 * outputs * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (!with_gradient) return r;
    // dL/dtheta = 1/2 tr((alpha alpha' - D K^-1) dK/dtheta)
    Eigen::MatrixXd w = alpha * alpha.transpose();
    w -= outputs * f.llt.solve(Eigen::MatrixXd::Identity(n, n));
    w *= 0.5;
    r.gradient.resize(d + 2);
    r.gradient.head(d + 1) = Kernel::weighted_gradient(x, gram, w, p);
    r.gradient[d + 1] = p.noise_variance * w.trace();
    return r;
}

}  // namespace detail

/// Summed log marginal likelihood over the columns of `y` for inputs `x`
/// (already standardized and pruned) and centered targets `y`.
template <GpKernel Kernel = ArdRbfKernel>
LmlResult log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const KernelParams& params,
                                  double jitter = 0.0, double max_jitter = 1e-4) {
    if (x.rows() != y.rows()) throw DimensionError("inputs and targets differ in row count");
    check_kernel_params(params, x.cols(), true);
    const Eigen::MatrixXd gram = Kernel::gram(x, params);
    auto f = detail::factorize(gram, params.noise_variance, jitter, max_jitter);
    return detail::lml_from_factor<Kernel>(x, y, params, gram, f, true);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct GpConfig {
    /// Random restarts in addition to the default initialization.
    int extra_restarts = 0;
    std::uint64_t seed = 0;
    double log_lengthscale_min = -5.0;
    double log_lengthscale_max = 10.0;
    double log_variance_min = -12.0;
    double log_variance_max = 5.0;
    int max_iterations = 200;
    double initial_jitter = 1e-10;
    double max_jitter = 1e-4;
    bool standardize_inputs = true;
    bool scale_targets = true;
    bool prune_constant_inputs = true;
    /// Starting point in standardized space, full input length. When absent,
    /// every lengthscale starts at the active dimension count, the signal
    /// variance at 1 and the noise variance at 1e-2.
    std::optional<KernelParams> initial;
};

struct GpPrediction {
    Eigen::MatrixXd mean;      ///< m x D
    Eigen::VectorXd variance;  ///< m, shared across outputs, in target units squared
    bool clamped = false;      ///< some variance came out negative and was set to 0
};

template <GpKernel Kernel = ArdRbfKernel>
class BasicGpModel {
  public:
    BasicGpModel() = default;

    /// Conditions on data with fixed hyperparameters (no optimization). The
    /// lengthscales cover every input dimension in standardized space;
    /// lengthscales of pruned dimensions are ignored. Zero noise is allowed.
    static BasicGpModel condition(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const KernelParams& params,
                                  const GpConfig& config = {}) {
        BasicGpModel m = prepare(x, y, config);
        check_kernel_params(params, x.cols(), true);
        m.params_ = m.restrict(params);
        m.finalize(config);
        m.lml_initial_ = m.lml_;
        return m;
    }

    /// Maximizes the summed log marginal likelihood over log-hyperparameters
    /// with the bounded quasi-Newton solver, then conditions on the data.
    static BasicGpModel fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const GpConfig& config = {}) {
        if (x.rows() < 2) throw ArgumentError("GP fit needs at least 2 training rows");
        if (!x.allFinite() || !y.allFinite()) throw ArgumentError("training data has non-finite entries");
        BasicGpModel m = prepare(x, y, config);
        const Eigen::Index d = static_cast<Eigen::Index>(m.input_.active.size());

        Eigen::VectorXd lo(d + 2), hi(d + 2);
        lo.head(d).setConstant(config.log_lengthscale_min);
        hi.head(d).setConstant(config.log_lengthscale_max);
        lo.tail(2).setConstant(config.log_variance_min);
        hi.tail(2).setConstant(config.log_variance_max);

        Eigen::VectorXd theta0(d + 2);
        if (config.initial) {
            check_kernel_params(*config.initial, x.cols());
            theta0 = pack(m.restrict(*config.initial));
        } else {
            theta0.head(d).setConstant(std::log(std::max<double>(1.0, static_cast<double>(d))));
            theta0[d] = 0.0;
            theta0[d + 1] = std::log(1e-2);
        }
        theta0 = theta0.cwiseMax(lo).cwiseMin(hi);

        auto objective = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
            try {
                KernelParams p = unpack(theta, d);
                const Eigen::MatrixXd gram = Kernel::gram(m.x_, p);
                auto f = detail::factorize(gram, p.noise_variance, config.initial_jitter, config.max_jitter);
                LmlResult r = detail::lml_from_factor<Kernel>(m.x_, m.y_, p, gram, f, true);
                grad = -r.gradient;
                return -r.value;
            } catch (const NumericalError&) {
                return std::numeric_limits<double>::infinity();
            }
        };

        BoxLbfgsOptions opts;
        opts.max_iterations = config.max_iterations;
        std::mt19937_64 rng(config.seed);
        std::uniform_real_distribution<double> u(-2.0, 2.0), noise_u(-10.0, -2.0);
        double best = std::numeric_limits<double>::infinity();
        Eigen::VectorXd best_theta = theta0;
        bool any_converged = false;
        for (int r = 0; r <= config.extra_restarts; ++r) {
            Eigen::VectorXd start = theta0;
            if (r > 0) {
                for (Eigen::Index j = 0; j < d; ++j) start[j] += u(rng);
                start[d] = u(rng);
                start[d + 1] = noise_u(rng);
                start = start.cwiseMax(lo).cwiseMin(hi);
            }
            Eigen::VectorXd scratch(d + 2);
            const double f0 = objective(start, scratch);
            if (r == 0) m.lml_initial_ = -f0;
            BoxLbfgsResult res = minimize_box(objective, start, lo, hi, opts);
            m.optimizer_iterations_ += res.iterations;
            any_converged = any_converged || res.converged;
            if (std::isfinite(res.f) && res.f < best) {
                best = res.f;
                best_theta = res.x;
            }
        }
        if (!std::isfinite(best)) throw NumericalError("marginal likelihood could not be evaluated at any restart");
        if (!any_converged) m.warnings_.push_back("optimizer did not converge; returning best-so-far hyperparameters");
        m.params_ = unpack(best_theta, d);
        m.finalize(config);
        return m;
    }

    GpPrediction predict(const Eigen::MatrixXd& queries) const {
        if (queries.cols() != input_.dim())
            throw DimensionError("query has " + std::to_string(queries.cols()) + " columns, expected " +
                                 std::to_string(input_.dim()));
        const Eigen::MatrixXd q = input_.transform_active(queries);
        const Eigen::MatrixXd ks = Kernel::cross(q, x_, params_);
        GpPrediction out;
        out.mean = target_.inverse(ks * alpha_);
        const Eigen::MatrixXd v = chol_.llt.matrixL().solve(ks.transpose());
        Eigen::VectorXd var = Kernel::prior_variance(params_) + params_.noise_variance -
                              v.colwise().squaredNorm().transpose().array();
        if ((var.array() < 0.0).any()) {
            out.clamped = true;
            var = var.cwiseMax(0.0);
        }
        out.variance = var * (target_.scale * target_.scale);
        return out;
    }

    /// Summed log marginal likelihood of the stored training data under
    /// other hyperparameters (active dimensions only, standardized space).
    LmlResult log_marginal_likelihood(const KernelParams& params) const {
        return gppf::log_marginal_likelihood<Kernel>(x_, y_, params, chol_.jitter);
    }

    /// Hyperparameters over every input dimension in standardized space;
    /// pruned dimensions carry the upper lengthscale bound.
    KernelParams kernel_params() const {
        KernelParams p = params_;
        p.lengthscales = Eigen::VectorXd::Constant(input_.dim(), std::exp(log_lengthscale_max_));
        for (std::size_t k = 0; k < input_.active.size(); ++k) p.lengthscales[input_.active[k]] = params_.lengthscales[k];
        return p;
    }

    /// Hyperparameters mapped back to raw input and target units.
    KernelParams raw_kernel_params() const {
        KernelParams p = kernel_params();
        p.lengthscales.array() *= input_.scale.array().square();
        const double s2 = target_.scale * target_.scale;
        p.signal_variance *= s2;
        p.noise_variance *= s2;
        return p;
    }

    const KernelParams& active_params() const { return params_; }
    const InputStandardizer& input_standardizer() const { return input_; }
    const TargetScaler& target_scaler() const { return target_; }
    const Eigen::MatrixXd& train_inputs() const { return x_; }
    const Eigen::MatrixXd& alpha() const { return alpha_; }
    Eigen::MatrixXd chol_factor() const { return chol_.llt.matrixL(); }
    double jitter() const { return chol_.jitter; }
    double log_marginal_likelihood_value() const { return lml_; }
    double initial_log_marginal_likelihood() const { return lml_initial_; }
    int optimizer_iterations() const { return optimizer_iterations_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    Eigen::Index input_dim() const { return input_.dim(); }
    Eigen::Index output_dim() const { return alpha_.cols(); }
    Eigen::Index train_size() const { return x_.rows(); }

    // Persistence ---------------------------------------------------------

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["format"] = "gppf-gp";
        j["version"] = 1;
        j["kernel"] = Kernel::name;
        j["input_mean"] = to_vec(input_.mean);
        j["input_scale"] = to_vec(input_.scale);
        j["active"] = input_.active;
        j["target_mean"] = to_vec(target_.mean);
        j["target_scale"] = target_.scale;
        j["lengthscales"] = to_vec(params_.lengthscales);
        j["signal_variance"] = params_.signal_variance;
        j["noise_variance"] = params_.noise_variance;
        j["jitter"] = chol_.jitter;
        j["log_lengthscale_max"] = log_lengthscale_max_;
        j["log_marginal_likelihood"] = lml_;
        j["train_inputs"] = to_rows(x_);
        j["alpha"] = to_rows(alpha_);
        return j;
    }

    static BasicGpModel from_json(const nlohmann::json& j) {
        if (j.value("format", "") != "gppf-gp" || j.value("version", 0) != 1)
            throw IoError("not a version-1 GP snapshot");
        if (j.value("kernel", "") != Kernel::name) throw IoError("snapshot kernel does not match");
        BasicGpModel m;
        m.input_.mean = from_vec(j.at("input_mean"));
        m.input_.scale = from_vec(j.at("input_scale"));
        m.input_.active = j.at("active").get<std::vector<int>>();
        m.target_.mean = from_vec(j.at("target_mean"));
        m.target_.scale = j.at("target_scale").get<double>();
        m.params_.lengthscales = from_vec(j.at("lengthscales"));
        m.params_.signal_variance = j.at("signal_variance").get<double>();
        m.params_.noise_variance = j.at("noise_variance").get<double>();
        m.log_lengthscale_max_ = j.at("log_lengthscale_max").get<double>();
        m.lml_ = m.lml_initial_ = j.at("log_marginal_likelihood").get<double>();
        m.x_ = from_rows(j.at("train_inputs"), static_cast<Eigen::Index>(m.input_.active.size()));
        m.alpha_ = from_rows(j.at("alpha"), m.target_.mean.size());
        const double jitter = j.at("jitter").get<double>();
        m.chol_ = detail::factorize(Kernel::gram(m.x_, m.params_), m.params_.noise_variance, jitter, std::max(jitter, 1e-4));
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write '" + path + "'");
        out << to_json().dump();
    }

    static BasicGpModel load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open '" + path + "'");
        return from_json(nlohmann::json::parse(in));
    }

  private:
    static BasicGpModel prepare(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const GpConfig& config) {
        if (x.rows() != y.rows())
            throw DimensionError("inputs have " + std::to_string(x.rows()) + " rows, targets " +
                                 std::to_string(y.rows()));
        if (x.rows() < 1) throw ArgumentError("GP needs at least one training row");
        BasicGpModel m;
        m.log_lengthscale_max_ = config.log_lengthscale_max;
        m.input_ = InputStandardizer::fit(x, config.standardize_inputs, config.prune_constant_inputs);
        m.target_ = TargetScaler::fit(y, true, config.scale_targets);
        m.x_ = m.input_.transform_active(x);
        m.y_ = m.target_.transform(y);
        int duplicates = 0;
        for (Eigen::Index i = 0; i < m.x_.rows(); ++i)
            for (Eigen::Index k = i + 1; k < m.x_.rows(); ++k)
                if (m.x_.row(i) == m.x_.row(k)) ++duplicates;
        if (duplicates > 0)
            m.warnings_.push_back(std::to_string(duplicates) + " duplicate training row pair(s) after standardization");
        return m;
    }

    KernelParams restrict(const KernelParams& full) const {
        KernelParams p = full;
        p.lengthscales.resize(static_cast<Eigen::Index>(input_.active.size()));
        for (std::size_t k = 0; k < input_.active.size(); ++k)
            p.lengthscales[static_cast<Eigen::Index>(k)] = full.lengthscales[input_.active[k]];
        return p;
    }

    static Eigen::VectorXd pack(const KernelParams& p) {
        const Eigen::Index d = p.lengthscales.size();
        Eigen::VectorXd t(d + 2);
        t.head(d) = p.lengthscales.array().log();
        t[d] = std::log(p.signal_variance);
        t[d + 1] = std::log(p.noise_variance);
        return t;
    }

    static KernelParams unpack(const Eigen::VectorXd& theta, Eigen::Index d) {
        KernelParams p;
        p.lengthscales = theta.head(d).array().exp();
        p.signal_variance = std::exp(theta[d]);
        p.noise_variance = std::exp(theta[d + 1]);
        return p;
    }

    void finalize(const GpConfig& config) {
        const Eigen::MatrixXd gram = Kernel::gram(x_, params_);
        chol_ = detail::factorize(gram, params_.noise_variance, config.initial_jitter, config.max_jitter);
        alpha_ = chol_.llt.solve(y_);
        lml_ = detail::lml_from_factor<Kernel>(x_, y_, params_, gram, chol_, false).value;
    }

    static std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }
    static Eigen::VectorXd from_vec(const nlohmann::json& j) {
        auto v = j.get<std::vector<double>>();
        return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    static nlohmann::json to_rows(const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_vec(m.row(i).transpose()));
        return rows;
    }
    static Eigen::MatrixXd from_rows(const nlohmann::json& j, Eigen::Index cols) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
        for (std::size_t i = 0; i < j.size(); ++i) {
            Eigen::VectorXd r = from_vec(j[i]);
            if (r.size() != cols) throw IoError("snapshot matrix row has the wrong length");
            m.row(static_cast<Eigen::Index>(i)) = r.transpose();
        }
        return m;
    }

    InputStandardizer input_;
    TargetScaler target_;
    Eigen::MatrixXd x_;
    Eigen::MatrixXd y_;
    KernelParams params_;
    detail::Factorization chol_;
    Eigen::MatrixXd alpha_;
    double lml_ = 0.0;
    double lml_initial_ = 0.0;
    double log_lengthscale_max_ = 10.0;
    int optimizer_iterations_ = 0;
    std::vector<std::string> warnings_;
};

using GpModel = BasicGpModel<ArdRbfKernel>;

}  // namespace gppf
