#pragma once

// Seeded random radial feeders for desk-scale experiments and scalability runs.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gppf/feeder.hpp"

namespace gppf {

enum class PhaseMix { single, three, mixed };
enum class LoadPlacement { all, leaves };

inline PhaseMix parse_phase_mix(std::string_view s) {
    if (s == "single" || s == "1") return PhaseMix::single;
    if (s == "three" || s == "3") return PhaseMix::three;
    if (s == "mixed") return PhaseMix::mixed;
    throw ArgumentError("unknown phase mix '" + std::string(s) + "' (single|three|mixed)");
}

struct SyntheticFeederSpec {
    int buses = 25;
    PhaseMix phase_mix = PhaseMix::mixed;
    int ders = 0;
    std::uint64_t seed = 0;
    /// `leaves` leaves every non-leaf bus unloaded (a bare primary).
    LoadPlacement load_placement = LoadPlacement::all;
    /// Loads are scaled so the estimated worst peak voltage drop equals this (p.u.).
    double target_peak_drop = 0.04;
};

namespace detail {

// Per-mile series impedance (ohms) of an overhead three-phase and a lateral
// configuration, typical 4.16 kV values.
inline Eigen::Matrix3cd trunk_config() {
    using C = std::complex<double>;
    Eigen::Matrix3cd z;
    z << C(0.4576, 1.0780), C(0.1560, 0.5017), C(0.1535, 0.3849),
         C(0.1560, 0.5017), C(0.4666, 1.0482), C(0.1580, 0.4236),
         C(0.1535, 0.3849), C(0.1580, 0.4236), C(0.4615, 1.0651);
    return z;
}

inline Eigen::Matrix3cd lateral_config() {
    using C = std::complex<double>;
    Eigen::Matrix3cd z;
    z << C(1.3292, 1.3475), C(0.2066, 0.4591), C(0.2090, 0.4025),
         C(0.2066, 0.4591), C(1.3238, 1.3569), C(0.2122, 0.5015),
         C(0.2090, 0.4025), C(0.2122, 0.5015), C(1.3348, 1.3294);
    return z;
}

inline double round_sig(double v, int digits = 6) {
    double out = 0.0;
    parse_number(format_number(v, digits), out);
    return out;
}

inline Eigen::MatrixXcd segment_impedance(PhaseSet phases, double self_magnitude) {
    const Eigen::Matrix3cd cfg = phases.size() == 3 ? trunk_config() : lateral_config();
    const auto ph = phases.phases();
    const double miles = self_magnitude / std::abs(cfg(static_cast<int>(ph[0]), static_cast<int>(ph[0])));
    Eigen::MatrixXcd z(ph.size(), ph.size());
    for (std::size_t i = 0; i < ph.size(); ++i)
        for (std::size_t j = 0; j < ph.size(); ++j) {
            auto v = cfg(static_cast<int>(ph[i]), static_cast<int>(ph[j])) * miles;
            z(i, j) = {round_sig(v.real()), round_sig(v.imag())};
        }
    return z;
}

inline const char* random_loadshape(std::mt19937_64& rng) {
    static constexpr const char* kClasses[] = {"residential", "commercial", "industrial"};
    return kClasses[std::uniform_int_distribution<int>(0, 2)(rng)];
}

struct Skeleton {
    std::vector<Bus> buses;
    std::vector<LineSegment> lines;
    std::vector<int> parent;  // index into buses, -1 for source
};

/// Adds loads to the requested buses, scales them to the target drop, and
/// sites DER units at randomly chosen loaded buses.
inline Feeder finish_feeder(Skeleton sk, const std::vector<std::vector<Phase>>& load_phases, int der_count,
                            double target_drop, std::mt19937_64& rng) {
    SourceSpec source;
    source.bus = sk.buses[0].id;
    const double zb = source.kv_base * source.kv_base * 1000.0 / source.kva_base;
    const std::size_t n = sk.buses.size();

    std::uniform_real_distribution<double> kw_dist(5.0, 50.0), pf_dist(0.88, 0.97);
    std::vector<LoadPoint> loads;
    // peak[b][phase] = (p, q) in kW at bus b
    std::vector<std::array<std::pair<double, double>, 3>> own(n);
    for (std::size_t b = 1; b < n; ++b)
        for (Phase p : load_phases[b]) {
            double kw = kw_dist(rng);
            double pf = pf_dist(rng);
            double kvar = kw * std::sqrt(1.0 / (pf * pf) - 1.0);
            loads.push_back({sk.buses[b].id, p, kw, kvar, random_loadshape(rng)});
            own[b][static_cast<int>(p)].first += kw;
            own[b][static_cast<int>(p)].second += kvar;
        }

    // Lossless self-impedance drop estimate at peak load; buses are created
    // parent-before-child so a reverse sweep accumulates subtree totals.
    auto sub = own;
    for (std::size_t b = n - 1; b >= 1; --b) {
        int par = sk.parent[b];
        for (int k = 0; k < 3; ++k) {
            sub[par][k].first += sub[b][k].first;
            sub[par][k].second += sub[b][k].second;
        }
    }
    std::vector<std::array<double, 3>> drop(n, {0.0, 0.0, 0.0});
    double worst = 0.0;
    for (std::size_t b = 1; b < n; ++b) {
        const LineSegment& ln = sk.lines[b - 1];
        for (Phase p : ln.phases.phases()) {
            int k = static_cast<int>(p);
            int pos = ln.phases.position(p);
            auto z = ln.impedance(pos, pos) / zb;
            double pp = sub[b][k].first / source.kva_base, qq = sub[b][k].second / source.kva_base;
            drop[b][k] = drop[sk.parent[b]][k] + (z.real() * pp + z.imag() * qq);
            worst = std::max(worst, drop[b][k]);
        }
    }
    const double scale = worst > 0.0 ? target_drop / worst : 1.0;
    for (LoadPoint& ld : loads) {
        ld.base_p_kw = round_sig(ld.base_p_kw * scale);
        ld.base_q_kvar = round_sig(ld.base_q_kvar * scale);
    }

    std::vector<int> loaded_buses;
    for (std::size_t b = 1; b < n; ++b)
        if (!load_phases[b].empty()) loaded_buses.push_back(static_cast<int>(b));
    std::shuffle(loaded_buses.begin(), loaded_buses.end(), rng);
    std::vector<DerUnit> ders;
    std::uniform_real_distribution<double> size_dist(0.3, 0.8);
    for (int i = 0; i < der_count && i < static_cast<int>(loaded_buses.size()); ++i) {
        int b = loaded_buses[i];
        DerUnit d;
        d.bus = sk.buses[b].id;
        if (sk.buses[b].phases.size() == 3 && load_phases[b].size() == 3 &&
            std::bernoulli_distribution(0.5)(rng)) {
            d.phases = PhaseSet::all();
        } else {
            const auto& lp = load_phases[b];
            d.phases = PhaseSet::single(lp[std::uniform_int_distribution<std::size_t>(0, lp.size() - 1)(rng)]);
        }
        double local = 0.0;
        for (Phase p : d.phases.phases()) local += own[b][static_cast<int>(p)].first * scale;
        d.rated_kw = round_sig(std::max(1e-3, size_dist(rng) * local));
        ders.push_back(d);
    }
    return Feeder(std::move(source), std::move(sk.buses), std::move(sk.lines), std::move(loads), std::move(ders));
}

inline void attach(Skeleton& sk, std::string id, PhaseSet phases, int parent, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> zmag(0.01, 1.0);
    sk.buses.push_back({std::move(id), phases});
    sk.parent.push_back(parent);
    sk.lines.push_back({sk.buses[parent].id, sk.buses.back().id, phases, segment_impedance(phases, zmag(rng))});
}

}  // namespace detail

/// Random radial feeder. Bus k attaches either to bus k-1 (building long
/// laterals) or to a uniformly chosen earlier bus; each lateral may drop
/// phases but never gains them. Segment self-impedances lie in 0.01-1.0 ohm.
inline Feeder generate_synthetic_feeder(const SyntheticFeederSpec& spec) {
    if (spec.buses < 2) throw ArgumentError("synthetic feeder needs at least 2 buses");
    if (spec.ders < 0) throw ArgumentError("DER count must be nonnegative");
    if (!(spec.target_peak_drop > 0.0 && spec.target_peak_drop < 0.5))
        throw ArgumentError("target peak drop must lie in (0, 0.5)");
    std::mt19937_64 rng(spec.seed);

    detail::Skeleton sk;
    const PhaseSet root_phases = spec.phase_mix == PhaseMix::single ? PhaseSet::single(Phase::a) : PhaseSet::all();
    sk.buses.push_back({"src", PhaseSet::all()});
    sk.parent.push_back(-1);

    std::bernoulli_distribution chain(0.35), keep(0.75);
    for (int k = 1; k < spec.buses; ++k) {
        int parent = k == 1 ? 0 : (chain(rng) ? k - 1 : std::uniform_int_distribution<int>(0, k - 1)(rng));
        PhaseSet phases = parent == 0 ? root_phases : sk.buses[parent].phases;
        if (spec.phase_mix == PhaseMix::mixed && phases.size() > 1 && !keep(rng)) {
            auto ph = phases.phases();
            std::shuffle(ph.begin(), ph.end(), rng);
            std::size_t m = std::uniform_int_distribution<std::size_t>(1, ph.size() - 1)(rng);
            PhaseSet reduced;
            for (std::size_t i = 0; i < m; ++i) reduced = *PhaseSet::parse(reduced.str() + phase_char(ph[i]));
            phases = reduced;
        }
        detail::attach(sk, "n" + std::to_string(k), phases, parent, rng);
    }

    std::vector<bool> has_child(sk.buses.size(), false);
    for (std::size_t b = 1; b < sk.buses.size(); ++b) has_child[sk.parent[b]] = true;
    std::vector<std::vector<Phase>> load_phases(sk.buses.size());
    for (std::size_t b = 1; b < sk.buses.size(); ++b)
        if (spec.load_placement == LoadPlacement::all || !has_child[b]) load_phases[b] = sk.buses[b].phases.phases();
    return detail::finish_feeder(std::move(sk), load_phases, spec.ders, spec.target_peak_drop, rng);
}

/// A 123-bus-style unbalanced feeder: 122 buses off the source with 99, 84
/// and 95 phase-nodes on phases a, b and c (278 in total), 60 three-phase
/// buses, two-phase and single-phase laterals, and 20 PV units.
inline Feeder make_ieee123_style_feeder(std::uint64_t seed = 123) {
    std::mt19937_64 rng(seed);
    detail::Skeleton sk;
    sk.buses.push_back({"150", PhaseSet::all()});
    sk.parent.push_back(-1);
    int next_id = 1;

    std::vector<int> three{0};
    std::bernoulli_distribution chain(0.5);
    for (int i = 0; i < 60; ++i) {
        int parent = chain(rng) ? three.back() : three[std::uniform_int_distribution<std::size_t>(0, three.size() - 1)(rng)];
        detail::attach(sk, std::to_string(next_id++), PhaseSet::all(), parent, rng);
        three.push_back(static_cast<int>(sk.buses.size()) - 1);
    }

    auto pick_parent = [&](PhaseSet need) {
        std::vector<int> cands;
        for (std::size_t b = 1; b < sk.buses.size(); ++b)
            if (need.subset_of(sk.buses[b].phases)) cands.push_back(static_cast<int>(b));
        return cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
    };

    std::vector<PhaseSet> two;
    two.insert(two.end(), 10, *PhaseSet::parse("ab"));
    two.insert(two.end(), 16, *PhaseSet::parse("ac"));
    two.insert(two.end(), 10, *PhaseSet::parse("bc"));
    std::shuffle(two.begin(), two.end(), rng);
    for (PhaseSet ps : two) detail::attach(sk, std::to_string(next_id++), ps, pick_parent(ps), rng);

    std::vector<PhaseSet> one;
    one.insert(one.end(), 13, PhaseSet::single(Phase::a));
    one.insert(one.end(), 4, PhaseSet::single(Phase::b));
    one.insert(one.end(), 9, PhaseSet::single(Phase::c));
    std::shuffle(one.begin(), one.end(), rng);
    for (PhaseSet ps : one) detail::attach(sk, std::to_string(next_id++), ps, pick_parent(ps), rng);

    std::vector<std::vector<Phase>> load_phases(sk.buses.size());
    std::bernoulli_distribution loaded(0.4);
    for (std::size_t b = 1; b < sk.buses.size(); ++b) {
        for (Phase p : sk.buses[b].phases.phases())
            if (loaded(rng)) load_phases[b].push_back(p);
        if (sk.buses[b].phases.size() == 1) load_phases[b] = sk.buses[b].phases.phases();
    }
    return detail::finish_feeder(std::move(sk), load_phases, 20, 0.05, rng);
}

}  // namespace gppf
