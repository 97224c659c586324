#pragma once

// Box-constrained limited-memory quasi-Newton minimizer (projected L-BFGS
// with Armijo backtracking along the projected path).

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gppf/common.hpp"

namespace gppf {

struct BoxLbfgsOptions {
    int max_iterations = 200;
    int memory = 10;
    /// Stop when the projected gradient's infinity norm falls below this.
    double pg_tolerance = 1e-6;
    /// Stop when the relative decrease of f in one step falls below this.
    double f_tolerance = 1e-12;
    int max_backtracks = 40;
};

struct BoxLbfgsResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
};

/// Minimizes `fg(x, grad)` over lo <= x <= hi. `fg` returns the objective
/// and fills the gradient; a non-finite return marks x as infeasible and the
/// line search backs off from it.
template <class Objective>
BoxLbfgsResult minimize_box(Objective&& fg, Eigen::VectorXd x0, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                            const BoxLbfgsOptions& opts = {}) {
    const Eigen::Index n = x0.size();
    if (lo.size() != n || hi.size() != n) throw DimensionError("bound vectors do not match the start point");
    auto project = [&](Eigen::VectorXd v) { return Eigen::VectorXd(v.cwiseMax(lo).cwiseMin(hi)); };

    BoxLbfgsResult res;
    res.x = project(std::move(x0));
    Eigen::VectorXd g(n);
    res.f = fg(res.x, g);
    res.evaluations = 1;
    if (!std::isfinite(res.f)) {
        res.message = "objective not finite at the start point";
        return res;
    }

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    Eigen::VectorXd gn(n);
    for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
        // Variables pinned at a bound with the gradient pushing outward.
        Eigen::ArrayXd free_mask(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const bool pinned = (res.x[i] <= lo[i] && g[i] > 0.0) || (res.x[i] >= hi[i] && g[i] < 0.0);
            free_mask[i] = pinned ? 0.0 : 1.0;
        }
        const Eigen::VectorXd gf = (g.array() * free_mask).matrix();
        if (gf.lpNorm<Eigen::Infinity>() <= opts.pg_tolerance) {
            res.converged = true;
            res.message = "projected gradient below tolerance";
            return res;
        }

        // Two-loop recursion restricted to the free variables.
        Eigen::VectorXd q = gf;
        const std::size_t m = s_hist.size();
        std::vector<double> alpha(m), rho(m);
        for (std::size_t k = m; k-- > 0;) {
            const Eigen::VectorXd s = (s_hist[k].array() * free_mask).matrix();
            const Eigen::VectorXd y = (y_hist[k].array() * free_mask).matrix();
            const double sy = s.dot(y);
            rho[k] = sy > 0.0 ? 1.0 / sy : 0.0;
            alpha[k] = rho[k] * s.dot(q);
            q -= alpha[k] * y;
        }
        if (m > 0) {
            const Eigen::VectorXd y = (y_hist.back().array() * free_mask).matrix();
            const double yy = y.squaredNorm();
            if (yy > 0.0) q *= (s_hist.back().array() * free_mask).matrix().dot(y) / yy;
        }
        for (std::size_t k = 0; k < m; ++k) {
            const Eigen::VectorXd s = (s_hist[k].array() * free_mask).matrix();
            const Eigen::VectorXd y = (y_hist[k].array() * free_mask).matrix();
            const double beta = rho[k] * y.dot(q);
            q += (alpha[k] - beta) * s;
        }
        Eigen::VectorXd dir = -(q.array() * free_mask).matrix();
        if (!(dir.dot(gf) < 0.0)) {
            s_hist.clear();
            y_hist.clear();
            dir = -gf;
        }
        double step = s_hist.empty() ? std::min(1.0, 1.0 / gf.lpNorm<Eigen::Infinity>()) : 1.0;

        bool accepted = false;
        Eigen::VectorXd xn;
        double fn = 0.0;
        for (int bt = 0; bt < opts.max_backtracks; ++bt, step *= 0.5) {
            xn = project(res.x + step * dir);
            const Eigen::VectorXd dx = xn - res.x;
            if (dx.lpNorm<Eigen::Infinity>() == 0.0) break;
            fn = fg(xn, gn);
            ++res.evaluations;
            if (std::isfinite(fn) && fn <= res.f + 1e-4 * g.dot(dx)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            if (!s_hist.empty()) {
                s_hist.clear();
                y_hist.clear();
                continue;
            }
            res.message = "line search failed";
            return res;
        }

        const Eigen::VectorXd s = xn - res.x;
        const Eigen::VectorXd y = gn - g;
        if (s.dot(y) > 1e-10 * y.squaredNorm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            if (static_cast<int>(s_hist.size()) > opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
            }
        }
        const double decrease = res.f - fn;
        res.x = xn;
        res.f = fn;
        g = gn;
        if (decrease <= opts.f_tolerance * std::max({std::abs(res.f), std::abs(fn), 1.0})) {
            res.converged = true;
            res.message = "relative decrease below tolerance";
            ++res.iterations;
            return res;
        }
    }
    res.message = "iteration limit reached";
    return res;
}

}  // namespace gppf
