#pragma once

// Three-phase LinDistFlow: lossless per-phase flow accumulation and the
// linearized squared-voltage drop with full phase coupling.

#include <array>
#include <cmath>
#include <complex>

#include <Eigen/Dense>

#include "gppf/feeder.hpp"
#include "gppf/pf_solver.hpp"

namespace gppf {

struct LdfSolution {
    Eigen::VectorXd v_sq;  ///< |V|^2 per phase-node, p.u.^2
    Eigen::MatrixXd p_flow;  ///< lines x 3, zero on absent phases
    Eigen::MatrixXd q_flow;
};

/// Off-diagonal flow term S^{pq} approximated as the phase-q flow rotated by
/// the nominal angle difference between phases p and q.
inline std::complex<double> coupled_flow(std::complex<double> s_q, Phase p, Phase q) {
    return s_q * std::polar(1.0, nominal_angle(p) - nominal_angle(q));
}

inline LdfSolution solve_ldf(const Feeder& feeder, const NetLoadVector& load) {
    const int d = feeder.dim();
    if (load.values.size() != 2 * d)
        throw DimensionError("net load vector has length " + std::to_string(load.values.size()) + ", expected " +
                             std::to_string(2 * d));
    const int nl = static_cast<int>(feeder.lines().size());
    LdfSolution sol;
    sol.p_flow = Eigen::MatrixXd::Zero(nl, 3);
    sol.q_flow = Eigen::MatrixXd::Zero(nl, 3);
    sol.v_sq.resize(d);

    const auto& order = feeder.bfs_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int bus = *it;
        const int l = feeder.parent_line(bus);
        if (l < 0) continue;
        for (Phase p : feeder.lines()[l].phases.phases()) {
            const int k = static_cast<int>(p);
            const int n = feeder.node_index(bus, p);
            double pf = load.p(n), qf = load.q(n);
            for (int c : feeder.child_lines(bus)) {
                pf += sol.p_flow(c, k);
                qf += sol.q_flow(c, k);
            }
            sol.p_flow(l, k) = pf;
            sol.q_flow(l, k) = qf;
        }
    }

    std::vector<std::array<double, 3>> v(feeder.buses().size());
    for (Phase p : kAllPhases) {
        const double m = feeder.source().v_mag[static_cast<int>(p)];
        v[feeder.source_index()][static_cast<int>(p)] = m * m;
    }
    for (int bus : order) {
        const int l = feeder.parent_line(bus);
        if (l < 0) continue;
        const int from = feeder.line_from(l);
        const PhaseSet ps = feeder.lines()[l].phases;
        const Eigen::MatrixXcd z = feeder.impedance_pu(l);
        for (Phase p : ps.phases()) {
            double drop = 0.0;
            for (Phase q : ps.phases()) {
                std::complex<double> s_q(sol.p_flow(l, static_cast<int>(q)), sol.q_flow(l, static_cast<int>(q)));
                drop += 2.0 * std::real(coupled_flow(s_q, p, q) * std::conj(z(ps.position(p), ps.position(q))));
            }
            v[bus][static_cast<int>(p)] = v[from][static_cast<int>(p)] - drop;
            sol.v_sq[feeder.node_index(bus, p)] = v[bus][static_cast<int>(p)];
        }
    }
    return sol;
}

/// Elementwise square root of v_sq; a nonpositive entry means the linear
/// model has broken down under the given loading.
inline Eigen::VectorXd ldf_voltage_mag(const LdfSolution& sol) {
    for (Eigen::Index i = 0; i < sol.v_sq.size(); ++i)
        if (!(sol.v_sq[i] > 0.0))
            throw NumericalError("LinDistFlow breakdown: squared voltage " + format_number(sol.v_sq[i], 6) +
                                 " at phase-node " + std::to_string(i));
    return sol.v_sq.array().sqrt();
}

}  // namespace gppf
