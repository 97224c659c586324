#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gppf/metrics.hpp"

using namespace gppf;

TEST(Metrics, IdenticalBlocks) {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Constant(3, 4, 1.02);
    const ErrorReport r = compute_errors(a, a);
    EXPECT_EQ(r.mse, 0.0);
    EXPECT_EQ(r.mae, 0.0);
    EXPECT_EQ(r.max_abs_error, 0.0);
    EXPECT_EQ(r.min_abs_error, 0.0);
    EXPECT_EQ(r.unit, "pu");
}

TEST(Metrics, SingleEntry) {
    Eigen::MatrixXd p(1, 1), t(1, 1);
    p << 1.1;
    t << 1.0;
    const ErrorReport r = compute_errors(p, t);
    EXPECT_NEAR(r.mse, 0.01, 1e-15);
    EXPECT_NEAR(r.mae, 0.1, 1e-15);
}

TEST(Metrics, TwoErrors) {
    Eigen::MatrixXd p(1, 2), t = Eigen::MatrixXd::Zero(1, 2);
    p << 0.1, -0.3;
    const ErrorReport r = compute_errors(p, t);
    EXPECT_NEAR(r.mse, 0.05, 1e-15);
    EXPECT_NEAR(r.mae, 0.2, 1e-15);
    EXPECT_NEAR(r.max_abs_error, 0.3, 1e-15);
    EXPECT_NEAR(r.min_abs_error, 0.1, 1e-15);
}

TEST(Metrics, Marginals) {
    Eigen::MatrixXd p(2, 3), t = Eigen::MatrixXd::Zero(2, 3);
    p << 1, -2, 3, 0, 0, -6;
    const ErrorReport r = compute_errors(p, t);
    EXPECT_EQ(r.per_output_mae, Eigen::Vector3d(0.5, 1.0, 4.5));
    EXPECT_EQ(r.per_sample_mae, Eigen::Vector2d(2.0, 2.0));
}

TEST(Metrics, OrderingInvariantsOnRandomBlocks) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::MatrixXd p(5, 7), t(5, 7);
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            p.data()[i] = z(rng);
            t.data()[i] = z(rng);
        }
        const ErrorReport r = compute_errors(p, t);
        EXPECT_LE(r.mae, r.rmse() * (1 + 1e-15));
        EXPECT_LE(r.min_abs_error, r.mae);
        EXPECT_LE(r.mae, r.max_abs_error);
        EXPECT_GE(r.min_abs_error, 0.0);

        // Permuting entries leaves mse and mae unchanged.
        Eigen::VectorXd flat_p = p.reshaped(), flat_t = t.reshaped();
        std::vector<int> idx(flat_p.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        Eigen::MatrixXd pp(1, flat_p.size()), tt(1, flat_t.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            pp(0, static_cast<Eigen::Index>(k)) = flat_p[idx[k]];
            tt(0, static_cast<Eigen::Index>(k)) = flat_t[idx[k]];
        }
        const ErrorReport q = compute_errors(pp, tt);
        EXPECT_NEAR(q.mse, r.mse, 1e-14);
        EXPECT_NEAR(q.mae, r.mae, 1e-14);
    }
}

TEST(Metrics, Errors) {
    EXPECT_THROW(compute_errors(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(2, 3)), DimensionError);
    EXPECT_THROW(compute_errors(Eigen::MatrixXd(0, 3), Eigen::MatrixXd(0, 3)), ArgumentError);
}

TEST(Metrics, Serialization) {
    Eigen::MatrixXd p(1, 2), t = Eigen::MatrixXd::Zero(1, 2);
    p << 0.1, -0.3;
    const ErrorReport r = compute_errors(p, t);
    EXPECT_EQ(ErrorReport::csv_header(), "mse,mae,max_abs_error,min_abs_error,unit");
    EXPECT_EQ(r.csv_row().substr(r.csv_row().rfind(',') + 1), "pu");
    EXPECT_NEAR(r.to_json().at("mae").get<double>(), 0.2, 1e-15);
}
