#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "json.hpp"

#include "gppf/common.hpp"

namespace gppf {

/// Error summary over an m x D prediction block, in per-unit voltage.
struct ErrorReport {
    double mse = 0.0;
    double mae = 0.0;
    double max_abs_error = 0.0;
    double min_abs_error = 0.0;
    Eigen::VectorXd per_output_mae;  ///< length D
    Eigen::VectorXd per_sample_mae;  ///< length m
    std::string unit = "pu";

    double rmse() const { return std::sqrt(mse); }

    static std::string csv_header() { return "mse,mae,max_abs_error,min_abs_error,unit"; }
    std::string csv_row() const {
        return format_number(mse) + "," + format_number(mae) + "," + format_number(max_abs_error) + "," +
               format_number(min_abs_error) + "," + unit;
    }
    nlohmann::json to_json() const {
        return {{"mse", mse}, {"mae", mae}, {"max_abs_error", max_abs_error}, {"min_abs_error", min_abs_error},
                {"unit", unit}};
    }
};

inline ErrorReport compute_errors(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw DimensionError("prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                             ", truth is " + std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
    if (pred.size() == 0) throw ArgumentError("cannot compute errors over an empty block");
    const Eigen::ArrayXXd err = (pred - truth).array().abs();
    ErrorReport r;
    r.mse = err.square().mean();
    r.mae = err.mean();
    r.max_abs_error = err.maxCoeff();
    r.min_abs_error = err.minCoeff();
    r.per_output_mae = err.colwise().mean().transpose();
    r.per_sample_mae = err.rowwise().mean();
    return r;
}

}  // namespace gppf
