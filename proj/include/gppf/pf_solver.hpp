#pragma once

// Nonlinear unbalanced power flow by backward/forward sweep, plus the exact
// Kirchhoff residual used to check any candidate solution.

#include <algorithm>
#include <array>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gppf/feeder.hpp"

namespace gppf {

/// Net load s = [p; q] in per-unit over the canonical flattening (length 2D).
/// Positive values consume power; DER output enters with a negative sign.
struct NetLoadVector {
    Eigen::VectorXd values;

    NetLoadVector() = default;
    explicit NetLoadVector(Eigen::VectorXd v) : values(std::move(v)) {}
    static NetLoadVector zeros(int dim) { return NetLoadVector(Eigen::VectorXd::Zero(2 * dim)); }

    int dim() const { return static_cast<int>(values.size() / 2); }
    double& p(int node) { return values[node]; }
    double& q(int node) { return values[dim() + node]; }
    double p(int node) const { return values[node]; }
    double q(int node) const { return values[dim() + node]; }
};

/// Voltage magnitudes (p.u.) and angles (rad) over the canonical flattening.
struct PfSolution {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
    int iterations = 0;
    double max_mismatch = 0.0;
};

struct SolverOptions {
    double tolerance = 1e-8;
    int max_iterations = 100;
    /// Any magnitude below this is treated as voltage collapse.
    double collapse_voltage = 0.5;
};

/// Per-bus phasors; entries for absent phases are unused.
using BusVoltages = std::vector<std::array<std::complex<double>, 3>>;

/// Sweep solver bound to one feeder. Holds only precomputed per-unit line
/// data, so a single instance may serve concurrent `solve` calls.
class SweepSolver {
  public:
    explicit SweepSolver(const Feeder& feeder) : feeder_(feeder) {
        const int nl = static_cast<int>(feeder.lines().size());
        z_.reserve(nl);
        y_.reserve(nl);
        for (int l = 0; l < nl; ++l) {
            z_.push_back(feeder.impedance_pu(l));
            y_.push_back(z_.back().inverse());
        }
    }

    const Feeder& feeder() const { return feeder_; }

    PfSolution solve(const NetLoadVector& load, const SolverOptions& opts = {}) const {
        check_load(load);
        if (!std::isfinite(load.values.sum())) throw DimensionError("net load vector has non-finite entries");
        BusVoltages v = flat_start();
        const std::size_t nl = feeder_.lines().size();
        std::vector<Eigen::VectorXcd> j(nl);

        double worst = 0.0;
        int worst_node = -1;
        for (int it = 0; it <= opts.max_iterations; ++it) {
            Eigen::VectorXd mm = residual(v, load);
            worst = mm.size() ? mm.maxCoeff(&worst_node) : 0.0;
            if (!std::isfinite(worst)) break;
            if (worst <= opts.tolerance) {
                PfSolution sol = to_solution(v);
                sol.iterations = it;
                sol.max_mismatch = worst;
                return sol;
            }
            if (it == opts.max_iterations) break;

            // Backward: accumulate branch currents leaf to source.
            const auto& order = feeder_.bfs_order();
            for (auto b = order.rbegin(); b != order.rend(); ++b) {
                const int bus = *b;
                const int l = feeder_.parent_line(bus);
                if (l < 0) continue;
                const PhaseSet ps = feeder_.lines()[l].phases;
                Eigen::VectorXcd cur = Eigen::VectorXcd::Zero(ps.size());
                for (Phase p : ps.phases()) {
                    const int pos = ps.position(p);
                    const int node = feeder_.node_index(bus, p);
                    std::complex<double> s(load.p(node), load.q(node));
                    cur[pos] = std::conj(s / v[bus][static_cast<int>(p)]);
                    for (int c : feeder_.child_lines(bus)) {
                        const PhaseSet cps = feeder_.lines()[c].phases;
                        if (cps.contains(p)) cur[pos] += j[c][cps.position(p)];
                    }
                }
                j[l] = std::move(cur);
            }
            // Forward: update voltages source to leaf.
            double vmin = 1e300;
            for (int bus : order) {
                const int l = feeder_.parent_line(bus);
                if (l < 0) continue;
                const PhaseSet ps = feeder_.lines()[l].phases;
                const int from = feeder_.line_from(l);
                Eigen::VectorXcd drop = z_[l] * j[l];
                for (Phase p : ps.phases()) {
                    auto& vt = v[bus][static_cast<int>(p)];
                    vt = v[from][static_cast<int>(p)] - drop[ps.position(p)];
                    vmin = std::min(vmin, std::abs(vt));
                }
            }
            if (!(vmin >= opts.collapse_voltage))
                throw ConvergenceError("voltage collapse: magnitude " + format_number(vmin, 6) + " p.u. below " +
                                       format_number(opts.collapse_voltage, 3) + " after sweep " +
                                       std::to_string(it + 1));
        }
        std::string where = worst_node >= 0 ? " at " + feeder_.nodes()[worst_node].bus + "." +
                                                  phase_char(feeder_.nodes()[worst_node].phase)
                                            : "";
        throw ConvergenceError("no convergence after " + std::to_string(opts.max_iterations) +
                               " sweeps; worst mismatch " + format_number(worst, 6) + " p.u." + where);
    }

    /// Apparent-power mismatch |V conj(I) - s| per phase-node, where I is the
    /// net current into the node implied by the candidate voltages.
    Eigen::VectorXd mismatch(const NetLoadVector& load, const PfSolution& candidate) const {
        check_load(load);
        const int d = feeder_.dim();
        if (candidate.v_mag.size() != d || candidate.v_ang.size() != d)
            throw DimensionError("candidate solution has length " + std::to_string(candidate.v_mag.size()) +
                                 ", expected " + std::to_string(d));
        BusVoltages v = flat_start();
        for (int n = 0; n < d; ++n)
            v[feeder_.node_bus(n)][static_cast<int>(feeder_.nodes()[n].phase)] =
                std::polar(candidate.v_mag[n], candidate.v_ang[n]);
        return residual(v, load);
    }

    BusVoltages flat_start() const {
        BusVoltages v(feeder_.buses().size());
        for (auto& bus : v)
            for (Phase p : kAllPhases) bus[static_cast<int>(p)] = feeder_.source_voltage(p);
        return v;
    }

  private:
    void check_load(const NetLoadVector& load) const {
        if (load.values.size() != 2 * feeder_.dim())
            throw DimensionError("net load vector has length " + std::to_string(load.values.size()) + ", expected " +
                                 std::to_string(2 * feeder_.dim()));
    }

    Eigen::VectorXd residual(const BusVoltages& v, const NetLoadVector& load) const {
        const std::size_t nl = feeder_.lines().size();
        std::vector<Eigen::VectorXcd> j(nl);
        for (std::size_t l = 0; l < nl; ++l) {
            const PhaseSet ps = feeder_.lines()[l].phases;
            Eigen::VectorXcd dv(ps.size());
            for (Phase p : ps.phases())
                dv[ps.position(p)] = v[feeder_.line_from(l)][static_cast<int>(p)] - v[feeder_.line_to(l)][static_cast<int>(p)];
            j[l] = y_[l] * dv;
        }
        Eigen::VectorXd out(feeder_.dim());
        for (int n = 0; n < feeder_.dim(); ++n) {
            const int bus = feeder_.node_bus(n);
            const Phase p = feeder_.nodes()[n].phase;
            const int l = feeder_.parent_line(bus);
            std::complex<double> cur = j[l][feeder_.lines()[l].phases.position(p)];
            for (int c : feeder_.child_lines(bus)) {
                const PhaseSet cps = feeder_.lines()[c].phases;
                if (cps.contains(p)) cur -= j[c][cps.position(p)];
            }
            const auto vn = v[bus][static_cast<int>(p)];
            out[n] = std::abs(vn * std::conj(cur) - std::complex<double>(load.p(n), load.q(n)));
        }
        return out;
    }

    PfSolution to_solution(const BusVoltages& v) const {
        PfSolution sol;
        sol.v_mag.resize(feeder_.dim());
        sol.v_ang.resize(feeder_.dim());
        for (int n = 0; n < feeder_.dim(); ++n) {
            const auto vn = v[feeder_.node_bus(n)][static_cast<int>(feeder_.nodes()[n].phase)];
            sol.v_mag[n] = std::abs(vn);
            sol.v_ang[n] = std::arg(vn);
        }
        return sol;
    }

    const Feeder& feeder_;
    std::vector<Eigen::MatrixXcd> z_;
    std::vector<Eigen::MatrixXcd> y_;
};

inline PfSolution solve_nonlinear(const Feeder& feeder, const NetLoadVector& load, const SolverOptions& opts = {}) {
    return SweepSolver(feeder).solve(load, opts);
}

inline Eigen::VectorXd mismatch(const Feeder& feeder, const NetLoadVector& load, const PfSolution& candidate) {
    return SweepSolver(feeder).mismatch(load, candidate);
}

/// Base (kW/kvar converted to p.u.) demand of every load, no DER, no shapes.
inline NetLoadVector base_load_vector(const Feeder& feeder, double scale = 1.0) {
    NetLoadVector s = NetLoadVector::zeros(feeder.dim());
    const double kva = feeder.source().kva_base;
    for (const LoadPoint& ld : feeder.loads()) {
        const int n = feeder.node_index(feeder.bus_index(ld.bus), ld.phase);
        s.p(n) += scale * ld.base_p_kw / kva;
        s.q(n) += scale * ld.base_q_kvar / kva;
    }
    return s;
}

}  // namespace gppf
