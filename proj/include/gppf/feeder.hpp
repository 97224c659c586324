#pragma once

// Unbalanced three-phase radial feeder: domain types, validation, the
// canonical phase-node flattening, and the text description format.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gppf/common.hpp"

namespace gppf {

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::a, Phase::b, Phase::c};

inline char phase_char(Phase p) { return static_cast<char>('a' + static_cast<int>(p)); }

inline std::optional<Phase> parse_phase(char ch) {
    if (ch >= 'a' && ch <= 'c') return static_cast<Phase>(ch - 'a');
    if (ch >= 'A' && ch <= 'C') return static_cast<Phase>(ch - 'A');
    return std::nullopt;
}

/// Nominal angle of the source phasor for a phase: 0, -120, +120 degrees.
inline double nominal_angle(Phase p) {
    constexpr double third = 2.0 * std::numbers::pi / 3.0;
    switch (p) {
        case Phase::a: return 0.0;
        case Phase::b: return -third;
        case Phase::c: return third;
    }
    return 0.0;
}

/// Subset of {a, b, c}, always iterated in a < b < c order.
class PhaseSet {
  public:
    constexpr PhaseSet() = default;
    static constexpr PhaseSet all() { return PhaseSet(0b111); }
    static constexpr PhaseSet single(Phase p) { return PhaseSet(std::uint8_t(1u << static_cast<int>(p))); }

    static std::optional<PhaseSet> parse(std::string_view s) {
        PhaseSet out;
        if (s.empty()) return std::nullopt;
        for (char ch : s) {
            auto p = parse_phase(ch);
            if (!p || out.contains(*p)) return std::nullopt;
            out.bits_ |= std::uint8_t(1u << static_cast<int>(*p));
        }
        return out;
    }

    constexpr bool contains(Phase p) const { return bits_ & (1u << static_cast<int>(p)); }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr int size() const { return (bits_ & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1); }
    constexpr bool subset_of(PhaseSet o) const { return (bits_ & ~o.bits_) == 0; }
    constexpr PhaseSet intersect(PhaseSet o) const { return PhaseSet(bits_ & o.bits_); }
    constexpr std::uint8_t bits() const { return bits_; }

    /// Position of `p` among the present phases, or -1.
    constexpr int position(Phase p) const {
        if (!contains(p)) return -1;
        int pos = 0;
        for (int i = 0; i < static_cast<int>(p); ++i) pos += (bits_ >> i) & 1;
        return pos;
    }

    std::vector<Phase> phases() const {
        std::vector<Phase> out;
        for (Phase p : kAllPhases)
            if (contains(p)) out.push_back(p);
        return out;
    }

    std::string str() const {
        std::string s;
        for (Phase p : kAllPhases)
            if (contains(p)) s.push_back(phase_char(p));
        return s;
    }

    friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

  private:
    constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits) {}
    std::uint8_t bits_ = 0;
};

struct Bus {
    std::string id;
    PhaseSet phases;
    double v_min = 0.95;
    double v_max = 1.05;
};

/// Series impedance in ohms over the present phases (self and mutual terms).
struct LineSegment {
    std::string from_bus;
    std::string to_bus;
    PhaseSet phases;
    Eigen::MatrixXcd impedance;
};

struct LoadPoint {
    std::string bus;
    Phase phase = Phase::a;
    double base_p_kw = 0.0;
    double base_q_kvar = 0.0;
    /// Loadshape class name; "*" lets the scenario generator pick one.
    std::string loadshape = "*";
};

struct DerUnit {
    std::string bus;
    PhaseSet phases;
    double rated_kw = 0.0;
    std::optional<double> q_setpoint_kvar;
};

/// Infinite-bus substation and per-unit bases. `kv_base` is line-to-neutral,
/// `kva_base` is per phase, so Zbase = kv_base^2 * 1000 / kva_base.
struct SourceSpec {
    std::string bus;
    std::array<double, 3> v_mag{1.0, 1.0, 1.0};
    double kv_base = 2.4017771198288433;
    double kva_base = 1000.0;
};

/// One entry of the canonical flattening: a (bus, phase) pair off the source.
struct PhaseNode {
    std::string bus;
    Phase phase;
    friend bool operator==(const PhaseNode&, const PhaseNode&) = default;
};

/// Validated, immutable radial feeder. Construction checks every structural
/// invariant and precomputes the topology used by the solvers.
class Feeder {
  public:
    Feeder(SourceSpec source, std::vector<Bus> buses, std::vector<LineSegment> lines,
           std::vector<LoadPoint> loads, std::vector<DerUnit> ders)
        : source_(std::move(source)),
          buses_(std::move(buses)),
          lines_(std::move(lines)),
          loads_(std::move(loads)),
          ders_(std::move(ders)) {
        validate_and_index();
    }

    const SourceSpec& source() const { return source_; }
    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<LineSegment>& lines() const { return lines_; }
    const std::vector<LoadPoint>& loads() const { return loads_; }
    const std::vector<DerUnit>& ders() const { return ders_; }

    int source_index() const { return source_index_; }
    int bus_index(const std::string& id) const {
        auto it = bus_lookup_.find(id);
        if (it == bus_lookup_.end()) throw ValidationError("unknown bus '" + id + "'");
        return it->second;
    }
    /// Index of the line feeding `bus`, -1 for the source.
    int parent_line(int bus) const { return parent_line_[bus]; }
    const std::vector<int>& child_lines(int bus) const { return child_lines_[bus]; }
    int line_from(int line) const { return line_ends_[line].first; }
    int line_to(int line) const { return line_ends_[line].second; }
    /// Buses in breadth-first order from the source (source first).
    const std::vector<int>& bfs_order() const { return bfs_order_; }
    int depth(int bus) const { return depth_[bus]; }

    /// Phase-node count D (source excluded).
    int dim() const { return static_cast<int>(nodes_.size()); }
    const std::vector<PhaseNode>& nodes() const { return nodes_; }
    /// Flat index of (bus, phase) or -1 when absent or at the source.
    int node_index(int bus, Phase p) const { return node_index_[bus][static_cast<int>(p)]; }
    int node_bus(int node) const { return node_bus_[node]; }

    double z_base() const { return source_.kv_base * source_.kv_base * 1000.0 / source_.kva_base; }
    Eigen::MatrixXcd impedance_pu(int line) const { return lines_[line].impedance / z_base(); }

    std::complex<double> source_voltage(Phase p) const {
        return std::polar(source_.v_mag[static_cast<int>(p)], nominal_angle(p));
    }

  private:
    void validate_and_index() {
        if (!(source_.kv_base > 0.0) || !(source_.kva_base > 0.0))
            throw ValidationError("per-unit bases must be positive");
        for (double v : source_.v_mag)
            if (!(v > 0.0)) throw ValidationError("source voltage magnitude must be positive");
        if (buses_.empty()) throw ValidationError("feeder has no buses");

        for (std::size_t i = 0; i < buses_.size(); ++i) {
            const Bus& b = buses_[i];
            if (b.phases.empty()) throw ValidationError("bus '" + b.id + "' has no phases");
            if (!(b.v_min > 0.0 && b.v_min < b.v_max))
                throw ValidationError("bus '" + b.id + "' needs 0 < v_min < v_max");
            if (!bus_lookup_.emplace(b.id, static_cast<int>(i)).second)
                throw ValidationError("duplicate bus '" + b.id + "'");
        }
        auto src = bus_lookup_.find(source_.bus);
        if (src == bus_lookup_.end()) throw ValidationError("source bus '" + source_.bus + "' is not declared");
        source_index_ = src->second;

        const std::size_t n = buses_.size();
        if (lines_.size() != n - 1)
            throw ValidationError("not radial: " + std::to_string(lines_.size()) + " lines for " +
                                  std::to_string(n) + " buses");

        parent_line_.assign(n, -1);
        child_lines_.assign(n, {});
        line_ends_.clear();
        for (std::size_t l = 0; l < lines_.size(); ++l) {
            const LineSegment& ln = lines_[l];
            auto f = bus_lookup_.find(ln.from_bus);
            auto t = bus_lookup_.find(ln.to_bus);
            if (f == bus_lookup_.end() || t == bus_lookup_.end())
                throw ValidationError("line " + ln.from_bus + "-" + ln.to_bus + " references an unknown bus");
            const std::string tag = "line " + ln.from_bus + "-" + ln.to_bus;
            if (ln.phases.empty()) throw ValidationError(tag + " has no phases");
            const int k = ln.phases.size();
            if (ln.impedance.rows() != k || ln.impedance.cols() != k)
                throw ValidationError(tag + ": impedance dimension does not match phase count");
            for (int i = 0; i < k; ++i)
                if (!(ln.impedance(i, i).real() > 0.0))
                    throw ValidationError(tag + ": diagonal resistance must be positive");
            const PhaseSet shared = buses_[f->second].phases.intersect(buses_[t->second].phases);
            if (!ln.phases.subset_of(shared)) throw ValidationError(tag + ": phase mismatch with its buses");
            if (t->second == source_index_) throw ValidationError("not radial: " + tag + " feeds the source");
            if (parent_line_[t->second] != -1)
                throw ValidationError("not radial: bus '" + ln.to_bus + "' has two feeding lines");
            if (buses_[t->second].phases != ln.phases)
                throw ValidationError("phase mismatch: bus '" + ln.to_bus + "' phases " +
                                      buses_[t->second].phases.str() + " not fed by " + tag);
            parent_line_[t->second] = static_cast<int>(l);
            child_lines_[f->second].push_back(static_cast<int>(l));
            line_ends_.emplace_back(f->second, t->second);
        }

        depth_.assign(n, -1);
        bfs_order_.clear();
        std::queue<int> q;
        q.push(source_index_);
        depth_[source_index_] = 0;
        while (!q.empty()) {
            int b = q.front();
            q.pop();
            bfs_order_.push_back(b);
            for (int l : child_lines_[b]) {
                int c = line_ends_[l].second;
                if (depth_[c] != -1) throw ValidationError("not radial: cycle through bus '" + buses_[c].id + "'");
                depth_[c] = depth_[b] + 1;
                q.push(c);
            }
        }
        if (bfs_order_.size() != n) {
            for (std::size_t i = 0; i < n; ++i)
                if (depth_[i] == -1)
                    throw ValidationError("unreachable bus '" + buses_[i].id + "' (not radial from source)");
        }

        node_index_.assign(n, {-1, -1, -1});
        nodes_.clear();
        node_bus_.clear();
        for (int b : bfs_order_) {
            if (b == source_index_) continue;
            for (Phase p : buses_[b].phases.phases()) {
                node_index_[b][static_cast<int>(p)] = static_cast<int>(nodes_.size());
                nodes_.push_back({buses_[b].id, p});
                node_bus_.push_back(b);
            }
        }

        for (const LoadPoint& ld : loads_) {
            auto it = bus_lookup_.find(ld.bus);
            if (it == bus_lookup_.end()) throw ValidationError("load at unknown bus '" + ld.bus + "'");
            if (it->second == source_index_) throw ValidationError("load at the source bus '" + ld.bus + "'");
            if (!buses_[it->second].phases.contains(ld.phase))
                throw ValidationError(std::string("phase mismatch: load on phase ") + phase_char(ld.phase) +
                                      " at bus '" + ld.bus + "'");
            if (!(ld.base_p_kw >= 0.0)) throw ValidationError("load at bus '" + ld.bus + "' has negative kW");
            if (!std::isfinite(ld.base_q_kvar)) throw ValidationError("load at bus '" + ld.bus + "' has bad kvar");
        }
        for (const DerUnit& d : ders_) {
            auto it = bus_lookup_.find(d.bus);
            if (it == bus_lookup_.end()) throw ValidationError("DER at unknown bus '" + d.bus + "'");
            if (it->second == source_index_) throw ValidationError("DER at the source bus '" + d.bus + "'");
            if (d.phases.size() != 1 && d.phases.size() != 3)
                throw ValidationError("DER at bus '" + d.bus + "' must be single- or three-phase");
            if (!d.phases.subset_of(buses_[it->second].phases))
                throw ValidationError("phase mismatch: DER at bus '" + d.bus + "'");
            if (!(d.rated_kw > 0.0)) throw ValidationError("DER at bus '" + d.bus + "' needs rated_kw > 0");
        }
    }

    SourceSpec source_;
    std::vector<Bus> buses_;
    std::vector<LineSegment> lines_;
    std::vector<LoadPoint> loads_;
    std::vector<DerUnit> ders_;

    std::unordered_map<std::string, int> bus_lookup_;
    int source_index_ = -1;
    std::vector<int> parent_line_;
    std::vector<std::vector<int>> child_lines_;
    std::vector<std::pair<int, int>> line_ends_;
    std::vector<int> bfs_order_;
    std::vector<int> depth_;
    std::vector<std::array<int, 3>> node_index_;
    std::vector<PhaseNode> nodes_;
    std::vector<int> node_bus_;
};

/// Canonical ordering of phase-nodes: breadth-first from the source, phases
/// a, b, c within a bus, source excluded. Inputs are laid out as [p; q] over
/// this ordering (length 2D), voltage targets over it directly (length D).
inline std::vector<PhaseNode> flatten_index(const Feeder& feeder) { return feeder.nodes(); }

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_complex(std::complex<double> z) {
    std::string s = format_number(z.real(), 9);
    double im = z.imag();
    if (std::signbit(im)) {
        s += "-j";
        s += format_number(-im, 9);
    } else {
        s += "+j";
        s += format_number(im, 9);
    }
    return s;
}

inline bool parse_complex(std::string_view tok, std::complex<double>& out) {
    std::size_t j = tok.find('j');
    if (j == std::string_view::npos || j == 0) return false;
    char sign = tok[j - 1];
    if (sign != '+' && sign != '-') return false;
    double re = 0.0, im = 0.0;
    if (!parse_number(tok.substr(0, j - 1), re) || !parse_number(tok.substr(j + 1), im)) return false;
    out = {re, sign == '-' ? -im : im};
    return true;
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

}  // namespace detail

/// Parses a feeder description document and validates it.
///
/// Sections: `[source]` (key = value lines: bus, kv_base, kva_base, v_mag),
/// `[bus]` (id phases [v_min v_max]), `[line]` (from to phases z...),
/// `[load]` (bus phase kw kvar [loadshape]), `[der]` (bus phases kw [kvar]).
/// Impedances are ohms written `r+jx`; a line lists either n diagonal terms
/// or the full n*n row-major matrix. `#` starts a comment.
inline Feeder load_feeder(std::string_view text) {
    enum class Section { none, source, bus, line, load, der } section = Section::none;
    SourceSpec source;
    source.bus.clear();
    bool seen_source = false;
    std::vector<Bus> buses;
    std::vector<LineSegment> lines;
    std::vector<LoadPoint> loads;
    std::vector<DerUnit> ders;

    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view raw = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        auto tok = detail::split_ws(raw);
        if (tok.empty()) {
            if (eol == text.size()) break;
            continue;
        }

        auto number = [&](std::string_view t, const char* field) {
            double v = 0.0;
            if (parse_number(t, v)) return v;
            throw ParseError(lineno, std::string("bad number for ") + field + ": '" + std::string(t) + "'");
        };
        auto phases = [&](std::string_view t) {
            auto ps = PhaseSet::parse(t);
            if (!ps) throw ParseError(lineno, "bad phase set '" + std::string(t) + "'");
            return *ps;
        };

        if (tok.size() == 1 && tok[0].front() == '[' && tok[0].back() == ']') {
            std::string_view name = tok[0].substr(1, tok[0].size() - 2);
            if (name == "source") section = Section::source, seen_source = true;
            else if (name == "bus") section = Section::bus;
            else if (name == "line") section = Section::line;
            else if (name == "load") section = Section::load;
            else if (name == "der") section = Section::der;
            else throw ParseError(lineno, "unknown section '" + std::string(name) + "'");
            continue;
        }

        switch (section) {
            case Section::none:
                throw ParseError(lineno, "record outside of any section");
            case Section::source: {
                if (tok.size() < 3 || tok[1] != "=") throw ParseError(lineno, "expected 'key = value'");
                std::string_view key = tok[0];
                if (key == "bus") {
                    if (tok.size() != 3) throw ParseError(lineno, "bus: expected one value");
                    source.bus = std::string(tok[2]);
                } else if (key == "kv_base") {
                    source.kv_base = number(tok[2], "kv_base");
                } else if (key == "kva_base") {
                    source.kva_base = number(tok[2], "kva_base");
                } else if (key == "v_mag") {
                    if (tok.size() == 3) {
                        double v = number(tok[2], "v_mag");
                        source.v_mag = {v, v, v};
                    } else if (tok.size() == 5) {
                        for (int i = 0; i < 3; ++i) source.v_mag[i] = number(tok[2 + i], "v_mag");
                    } else {
                        throw ParseError(lineno, "v_mag: expected 1 or 3 values");
                    }
                } else {
                    throw ParseError(lineno, "unknown source key '" + std::string(key) + "'");
                }
                break;
            }
            case Section::bus: {
                if (tok.size() != 2 && tok.size() != 4) throw ParseError(lineno, "bus: expected 'id phases [v_min v_max]'");
                Bus b{std::string(tok[0]), phases(tok[1])};
                if (tok.size() == 4) {
                    b.v_min = number(tok[2], "v_min");
                    b.v_max = number(tok[3], "v_max");
                }
                buses.push_back(std::move(b));
                break;
            }
            case Section::line: {
                if (tok.size() < 4) throw ParseError(lineno, "line: expected 'from to phases impedance...'");
                LineSegment ln{std::string(tok[0]), std::string(tok[1]), phases(tok[2]), {}};
                const int k = ln.phases.size();
                const std::size_t nz = tok.size() - 3;
                ln.impedance = Eigen::MatrixXcd::Zero(k, k);
                std::complex<double> z;
                if (nz == static_cast<std::size_t>(k)) {
                    for (int i = 0; i < k; ++i) {
                        if (!detail::parse_complex(tok[3 + i], z))
                            throw ParseError(lineno, "bad impedance '" + std::string(tok[3 + i]) + "'");
                        ln.impedance(i, i) = z;
                    }
                } else if (nz == static_cast<std::size_t>(k * k)) {
                    for (int i = 0; i < k; ++i)
                        for (int j = 0; j < k; ++j) {
                            auto t = tok[3 + i * k + j];
                            if (!detail::parse_complex(t, z))
                                throw ParseError(lineno, "bad impedance '" + std::string(t) + "'");
                            ln.impedance(i, j) = z;
                        }
                } else {
                    throw ParseError(lineno, "impedance: expected " + std::to_string(k) + " or " +
                                                 std::to_string(k * k) + " entries, got " + std::to_string(nz));
                }
                lines.push_back(std::move(ln));
                break;
            }
            case Section::load: {
                if (tok.size() != 4 && tok.size() != 5) throw ParseError(lineno, "load: expected 'bus phase kw kvar [loadshape]'");
                if (tok[1].size() != 1 || !parse_phase(tok[1][0]))
                    throw ParseError(lineno, "load: bad phase '" + std::string(tok[1]) + "'");
                LoadPoint ld{std::string(tok[0]), *parse_phase(tok[1][0]), number(tok[2], "kw"), number(tok[3], "kvar")};
                if (tok.size() == 5) ld.loadshape = std::string(tok[4]);
                loads.push_back(std::move(ld));
                break;
            }
            case Section::der: {
                if (tok.size() != 3 && tok.size() != 4) throw ParseError(lineno, "der: expected 'bus phases kw [kvar]'");
                DerUnit d{std::string(tok[0]), phases(tok[1]), number(tok[2], "kw"), std::nullopt};
                if (tok.size() == 4) d.q_setpoint_kvar = number(tok[3], "kvar");
                ders.push_back(std::move(d));
                break;
            }
        }
        if (eol == text.size()) break;
    }
    if (!seen_source || source.bus.empty()) throw ParseError(lineno, "missing [source] section with 'bus = ...'");
    return Feeder(std::move(source), std::move(buses), std::move(lines), std::move(loads), std::move(ders));
}

inline Feeder load_feeder_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feeder file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_feeder(ss.str());
}

/// Renders a feeder in the description format, numbers at 9 significant digits.
inline std::string emit_feeder(const Feeder& feeder) {
    std::ostringstream out;
    const SourceSpec& s = feeder.source();
    out << "[source]\n";
    out << "bus = " << s.bus << "\n";
    out << "kv_base = " << format_number(s.kv_base, 9) << "\n";
    out << "kva_base = " << format_number(s.kva_base, 9) << "\n";
    out << "v_mag = " << format_number(s.v_mag[0], 9) << " " << format_number(s.v_mag[1], 9) << " "
        << format_number(s.v_mag[2], 9) << "\n";

    out << "\n[bus]\n";
    for (const Bus& b : feeder.buses())
        out << b.id << " " << b.phases.str() << " " << format_number(b.v_min, 9) << " " << format_number(b.v_max, 9)
            << "\n";

    out << "\n[line]\n";
    for (const LineSegment& ln : feeder.lines()) {
        out << ln.from_bus << " " << ln.to_bus << " " << ln.phases.str();
        const auto k = ln.impedance.rows();
        bool diagonal = true;
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j)
                if (i != j && ln.impedance(i, j) != std::complex<double>{}) diagonal = false;
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < k; ++j)
                if (!diagonal || i == j) out << " " << detail::format_complex(ln.impedance(i, j));
        out << "\n";
    }

    out << "\n[load]\n";
    for (const LoadPoint& ld : feeder.loads())
        out << ld.bus << " " << phase_char(ld.phase) << " " << format_number(ld.base_p_kw, 9) << " "
            << format_number(ld.base_q_kvar, 9) << " " << ld.loadshape << "\n";

    out << "\n[der]\n";
    for (const DerUnit& d : feeder.ders()) {
        out << d.bus << " " << d.phases.str() << " " << format_number(d.rated_kw, 9);
        if (d.q_setpoint_kvar) out << " " << format_number(*d.q_setpoint_kvar, 9);
        out << "\n";
    }
    return out.str();
}

inline std::string feeder_hash(const Feeder& feeder) {
    Fnv1a h;
    h.update(emit_feeder(feeder));
    return h.hex();
}

}  // namespace gppf
