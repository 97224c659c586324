#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "gppf/gp.hpp"
#include "gppf/scenario.hpp"
#include "gppf/synthetic.hpp"
#include "gppf/metrics.hpp"

using namespace gppf;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

KernelParams params(Eigen::VectorXd l, double s, double n) {
    KernelParams p;
    p.lengthscales = std::move(l);
    p.signal_variance = s;
    p.noise_variance = n;
    return p;
}

// Direct evaluation with an LU decomposition, no Cholesky.
double lml_oracle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const KernelParams& p) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double d2 = 0.0;
            for (Eigen::Index c = 0; c < x.cols(); ++c) d2 += std::pow(x(i, c) - x(j, c), 2) / p.lengthscales[c];
            k(i, j) = p.signal_variance * std::exp(-0.5 * d2) + (i == j ? p.noise_variance : 0.0);
        }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
    const double logdet = lu.matrixLU().diagonal().array().abs().log().sum();
    double total = 0.0;
    for (Eigen::Index o = 0; o < y.cols(); ++o)
        total += -0.5 * y.col(o).dot(lu.solve(y.col(o))) - 0.5 * logdet - 0.5 * n * std::log(2 * std::numbers::pi);
    return total;
}

}  // namespace

TEST(Kernel, Examples) {
    const KernelParams p = params(Eigen::VectorXd::Constant(1, 2.0), 1.0, 1.0);
    Eigen::VectorXd a(1), b(1);
    a << 0.3;
    b << 0.3 + std::sqrt(2.0);
    EXPECT_NEAR(kernel_eval(a, b, p), 0.606530660, 1e-9);
    EXPECT_NEAR(kernel_eval(a, b, p), std::exp(-0.5), 1e-15);
    EXPECT_EQ(kernel_eval(a, b, p), kernel_eval(b, a, p));

    const KernelParams q = params(Eigen::Vector3d(0.5, 2.0, 7.0), 3.5, 0.1);
    const Eigen::Vector3d c(1.0, -2.0, 0.25);
    EXPECT_DOUBLE_EQ(kernel_eval(c, c, q), 3.5);
}

TEST(Kernel, Errors) {
    const KernelParams p = params(Eigen::VectorXd::Ones(2), 1.0, 1.0);
    EXPECT_THROW(kernel_eval(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), p), DimensionError);
    EXPECT_THROW(kernel_eval(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3), p), DimensionError);
    EXPECT_THROW(kernel_eval(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), params(Eigen::Vector2d(1, 0), 1, 1)),
                 ArgumentError);
    EXPECT_THROW(kernel_eval(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), params(Eigen::Vector2d(1, 1), -1, 1)),
                 ArgumentError);
}

TEST(Kernel, GramIsSymmetricPsd) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Eigen::MatrixXd x = random_matrix(30, 4, seed);
        const Eigen::VectorXd l = random_matrix(4, 1, seed + 100, 0.05, 5.0);
        const KernelParams p = params(l, 1.7, 1e-6);
        const Eigen::MatrixXd k = ArdRbfKernel::gram(x, p);
        EXPECT_EQ((k - k.transpose()).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues().minCoeff(), -1e-8);
        EXPECT_NO_THROW(detail::factorize(k, 0.0, 1e-10, 1e-4));
        for (Eigen::Index i = 0; i < 5; ++i)
            EXPECT_NEAR(k(i, i + 1), kernel_eval(x.row(i).transpose(), x.row(i + 1).transpose(), p), 1e-14);
    }
}

TEST(MarginalLikelihood, MatchesDirectEvaluation) {
    const Eigen::MatrixXd x = random_matrix(12, 3, 4);
    const Eigen::MatrixXd y = random_matrix(12, 2, 5);
    const KernelParams p = params(Eigen::Vector3d(0.7, 1.9, 3.0), 1.3, 0.05);
    EXPECT_NEAR(log_marginal_likelihood(x, y, p).value, lml_oracle(x, y, p), 1e-9);
}

TEST(MarginalLikelihood, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Eigen::MatrixXd x = random_matrix(10, 3, seed);
        const Eigen::MatrixXd y = random_matrix(10, 2, seed + 50);
        const KernelParams p = params(random_matrix(3, 1, seed + 7, 0.3, 3.0), 0.8, 0.02);
        const LmlResult r = log_marginal_likelihood(x, y, p);
        const double h = 1e-5;
        for (int k = 0; k < 5; ++k) {
            auto shifted = [&](double delta) {
                KernelParams q = p;
                if (k < 3) q.lengthscales[k] *= std::exp(delta);
                else if (k == 3) q.signal_variance *= std::exp(delta);
                else q.noise_variance *= std::exp(delta);
                return log_marginal_likelihood(x, y, q).value;
            };
            const double fd = (shifted(h) - shifted(-h)) / (2 * h);
            EXPECT_LT(std::abs(fd - r.gradient[k]) / std::max(1e-8, std::abs(fd)), 1e-4) << "param " << k;
        }
    }
}

TEST(MarginalLikelihood, PureNoiseLimit) {
    const Eigen::MatrixXd x = random_matrix(8, 2, 9);
    Eigen::MatrixXd y = random_matrix(8, 3, 10);
    y.rowwise() -= y.colwise().mean();
    const double noise = 0.3;
    const double expect = -0.5 * y.squaredNorm() / noise - 0.5 * y.size() * std::log(2 * std::numbers::pi * noise);
    const double v = log_marginal_likelihood(x, y, params(Eigen::Vector2d(1, 1), 1e-12, noise)).value;
    EXPECT_NEAR(v, expect, 1e-8);
}

TEST(GpFit, LikelihoodImprovesAndIsLocallyOptimal) {
    const Eigen::MatrixXd x = random_matrix(25, 3, 21);
    Eigen::MatrixXd y(25, 2);
    y.col(0) = (x.col(0).array() * 1.3).sin() + 0.2 * x.col(1).array();
    y.col(1) = x.col(2).array().square() * 0.5;
    const GpModel m = GpModel::fit(x, y);
    EXPECT_GE(m.log_marginal_likelihood_value(), m.initial_log_marginal_likelihood());
    KernelParams doubled = m.active_params();
    doubled.lengthscales *= 2.0;
    EXPECT_LE(m.log_marginal_likelihood(doubled).value, m.log_marginal_likelihood_value() + 1e-9);
    EXPECT_NEAR(m.log_marginal_likelihood(m.active_params()).value, m.log_marginal_likelihood_value(), 1e-8);
}

TEST(GpFit, RecoversKnownHyperparameters) {
    // Targets sampled from a GP prior with l = 1, sigma_s^2 = 1, sigma_eps^2 = 1e-4.
    const Eigen::Index n = 50, outputs = 4;
    const Eigen::MatrixXd x = random_matrix(n, 2, 33, -3.0, 3.0);
    const KernelParams truth = params(Eigen::Vector2d(1.0, 1.0), 1.0, 1e-4);
    Eigen::MatrixXd k = ArdRbfKernel::gram(x, truth);
    k.diagonal().array() += truth.noise_variance;
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(k).matrixL();
    std::mt19937_64 rng(34);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd w(n, outputs);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = z(rng);
    const Eigen::MatrixXd y = l * w;

    GpConfig cfg;
    cfg.standardize_inputs = false;
    cfg.scale_targets = false;
    cfg.extra_restarts = 2;
    cfg.seed = 5;
    const GpModel m = GpModel::fit(x, y, cfg);
    const KernelParams p = m.kernel_params();
    for (Eigen::Index d = 0; d < 2; ++d) EXPECT_NEAR(std::log(p.lengthscales[d]), 0.0, 0.5);
    EXPECT_NEAR(std::log(p.signal_variance), 0.0, 0.5);
    EXPECT_NEAR(std::log(p.noise_variance), std::log(1e-4), 0.5);
}

TEST(GpPredict, InterpolatesWithoutNoise) {
    const Eigen::MatrixXd x = random_matrix(15, 2, 41);
    const Eigen::MatrixXd y = random_matrix(15, 3, 42);
    GpConfig cfg;
    cfg.initial_jitter = 1e-12;
    const GpModel m = GpModel::condition(x, y, params(Eigen::Vector2d(0.5, 0.8), 1.0, 0.0), cfg);
    EXPECT_LE(m.jitter(), 1e-12);
    EXPECT_LT((m.predict(x).mean - y).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(GpPredict, SinglePointInterpolation) {
    Eigen::MatrixXd x(1, 2), y(1, 2);
    x << 0.4, -1.0;
    y << 1.01, 0.97;
    const GpModel m = GpModel::condition(x, y, params(Eigen::Vector2d(1, 1), 1.0, 0.0));
    EXPECT_LT((m.predict(x).mean - y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GpPredict, RevertsToPriorFarAway) {
    const Eigen::MatrixXd x = random_matrix(10, 2, 51);
    const Eigen::MatrixXd y = random_matrix(10, 2, 52);
    GpConfig cfg;
    cfg.standardize_inputs = false;
    cfg.scale_targets = false;
    const GpModel m = GpModel::condition(x, y, params(Eigen::Vector2d(0.5, 2.0), 1.7, 0.01), cfg);
    Eigen::MatrixXd far(1, 2);
    far << 1e4, -1e4;
    const GpPrediction p = m.predict(far);
    EXPECT_NEAR(p.variance[0], 1.7 + 0.01, 1e-12);
    EXPECT_NEAR(p.mean(0, 0), y.col(0).mean(), 1e-12);
    EXPECT_NEAR(p.mean(0, 1), y.col(1).mean(), 1e-12);
    EXPECT_TRUE((m.predict(x).variance.array() >= 0.0).all());
}

TEST(GpPredict, JointEqualsPerOutput) {
    const Eigen::MatrixXd x = random_matrix(20, 3, 61);
    const Eigen::MatrixXd y = random_matrix(20, 4, 62);
    const Eigen::MatrixXd q = random_matrix(7, 3, 63);
    GpConfig cfg;
    cfg.scale_targets = false;
    const KernelParams p = params(Eigen::Vector3d(0.9, 1.5, 2.2), 1.1, 1e-3);
    const Eigen::MatrixXd joint = GpModel::condition(x, y, p, cfg).predict(q).mean;
    for (Eigen::Index o = 0; o < y.cols(); ++o) {
        const Eigen::MatrixXd single = GpModel::condition(x, y.col(o), p, cfg).predict(q).mean;
        EXPECT_LT((single.col(0) - joint.col(o)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(GpPredict, PrunesConstantInputs) {
    Eigen::MatrixXd x = random_matrix(12, 4, 71);
    x.col(2).setConstant(3.0);
    const Eigen::MatrixXd y = x.col(0).array().sin().matrix();
    const GpModel m = GpModel::fit(x, y);
    EXPECT_EQ(m.input_standardizer().active.size(), 3u);
    EXPECT_EQ(m.kernel_params().lengthscales.size(), 4);
    Eigen::MatrixXd q = random_matrix(3, 4, 72);
    q.col(2).setConstant(3.0);
    EXPECT_EQ(m.predict(q).mean.rows(), 3);
}

TEST(GpPredict, Errors) {
    const Eigen::MatrixXd x = random_matrix(5, 2, 81);
    EXPECT_THROW(GpModel::fit(x, random_matrix(4, 1, 82)), DimensionError);
    EXPECT_THROW(GpModel::fit(x.topRows(1), random_matrix(1, 1, 82)), ArgumentError);
    const GpModel m = GpModel::fit(x, random_matrix(5, 1, 83));
    EXPECT_THROW(m.predict(random_matrix(2, 3, 84)), DimensionError);
    Eigen::MatrixXd bad = x;
    bad(0, 0) = std::nan("");
    EXPECT_THROW(GpModel::fit(bad, random_matrix(5, 1, 83)), ArgumentError);
}

TEST(GpPersistence, RoundTripReproducesPredictions) {
    const Eigen::MatrixXd x = random_matrix(18, 5, 91);
    Eigen::MatrixXd y(18, 3);
    y.col(0) = x.col(0) + x.col(1).cwiseProduct(x.col(2));
    y.col(1) = x.col(3).array().cos();
    y.col(2) = x.col(4) * 0.1;
    const GpModel m = GpModel::fit(x, y);
    const auto path = std::filesystem::temp_directory_path() / "gppf_gp_roundtrip.json";
    m.save(path.string());
    const GpModel r = GpModel::load(path.string());
    std::filesystem::remove(path);
    const Eigen::MatrixXd q = random_matrix(9, 5, 92);
    const GpPrediction a = m.predict(q), b = r.predict(q);
    EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((a.variance - b.variance).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(GpModel::from_json({{"format", "other"}}), IoError);
}

TEST(GpFit, DeterministicPerSeed) {
    const Eigen::MatrixXd x = random_matrix(15, 3, 101);
    const Eigen::MatrixXd y = x.rowwise().sum();
    GpConfig cfg;
    cfg.extra_restarts = 2;
    cfg.seed = 3;
    const GpModel a = GpModel::fit(x, y, cfg), b = GpModel::fit(x, y, cfg);
    EXPECT_EQ(a.active_params().lengthscales, b.active_params().lengthscales);
    EXPECT_EQ(a.alpha(), b.alpha());
}

TEST(GpFit, Ieee123StyleCaseOne) {
    const Feeder f = make_ieee123_style_feeder();
    const Dataset ds = generate_dataset(f, 25, 1);
    const auto [train, test] = split_train_test(ds, 24, 1);
    const GpModel m = GpModel::fit(train.inputs, train.targets);
    EXPECT_LT(compute_errors(m.predict(test.inputs).mean, test.targets).mae, 1e-3);
}
