#pragma once

// Normalization constants shared by the GP and MLP surrogates so both see
// the same preprocessed data.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "gppf/common.hpp"

namespace gppf {

/// Per-dimension centering and scaling of an input design matrix. Dimensions
/// with zero spread in the training data are marked inactive: the kernel
/// ignores them and the MLP sees a constant zero there.
struct InputStandardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;
    std::vector<int> active;

    static InputStandardizer fit(const Eigen::MatrixXd& x, bool standardize = true, bool prune_constant = true) {
        InputStandardizer s;
        const Eigen::Index n = x.rows(), d = x.cols();
        s.mean = Eigen::VectorXd::Zero(d);
        s.scale = Eigen::VectorXd::Ones(d);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double mu = n ? x.col(j).mean() : 0.0;
            const double sd = n ? std::sqrt((x.col(j).array() - mu).square().mean()) : 0.0;
            const bool constant = !(sd > 1e-12 * (1.0 + std::abs(mu)));
            if (standardize) {
                s.mean[j] = mu;
                s.scale[j] = constant ? 1.0 : sd;
            }
            if (!(prune_constant && constant)) s.active.push_back(static_cast<int>(j));
        }
        return s;
    }

    Eigen::Index dim() const { return mean.size(); }

    /// Standardized values restricted to the active dimensions.
    Eigen::MatrixXd transform_active(const Eigen::MatrixXd& x) const {
        check(x);
        Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) {
            const int j = active[k];
            out.col(static_cast<Eigen::Index>(k)) = (x.col(j).array() - mean[j]) / scale[j];
        }
        return out;
    }

    /// Standardized values over all dimensions, inactive ones forced to zero.
    Eigen::MatrixXd transform_full(const Eigen::MatrixXd& x) const {
        check(x);
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(x.rows(), x.cols());
        for (int j : active) out.col(j) = (x.col(j).array() - mean[j]) / scale[j];
        return out;
    }

  private:
    void check(const Eigen::MatrixXd& x) const {
        if (x.cols() != mean.size())
            throw DimensionError("input has " + std::to_string(x.cols()) + " columns, expected " +
                                 std::to_string(mean.size()));
    }
};

/// Per-output centering with one pooled scale shared by every output, so a
/// single set of kernel variances applies across all outputs.
struct TargetScaler {
    Eigen::VectorXd mean;
    double scale = 1.0;

    static TargetScaler fit(const Eigen::MatrixXd& y, bool center = true, bool pooled_scale = true) {
        TargetScaler t;
        t.mean = center && y.rows() ? Eigen::VectorXd(y.colwise().mean().transpose())
                                    : Eigen::VectorXd::Zero(y.cols());
        if (pooled_scale && y.rows() > 0 && y.cols() > 0) {
            const double var = (y.rowwise() - t.mean.transpose()).array().square().mean();
            const double sd = std::sqrt(var);
            t.scale = sd > 1e-300 ? sd : 1.0;
        }
        return t;
    }

    Eigen::MatrixXd transform(const Eigen::MatrixXd& y) const {
        check(y);
        return (y.rowwise() - mean.transpose()) / scale;
    }

    Eigen::MatrixXd inverse(const Eigen::MatrixXd& z) const {
        check(z);
        return (z * scale).rowwise() + mean.transpose();
    }

  private:
    void check(const Eigen::MatrixXd& y) const {
        if (y.cols() != mean.size())
            throw DimensionError("target has " + std::to_string(y.cols()) + " columns, expected " +
                                 std::to_string(mean.size()));
    }
};

}  // namespace gppf
