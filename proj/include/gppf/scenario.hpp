#pragma once

// Quasi-static hourly time series: loadshapes, a lognormal load multiplier,
// synthetic PV irradiance, and (net load, voltage) pairs from the sweep solver.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gppf/common.hpp"
#include "gppf/feeder.hpp"
#include "gppf/pf_solver.hpp"

namespace gppf {

enum class LoadClass { residential, commercial, industrial };

inline const char* to_string(LoadClass c) {
    switch (c) {
        case LoadClass::residential: return "residential";
        case LoadClass::commercial: return "commercial";
        case LoadClass::industrial: return "industrial";
    }
    return "?";
}

inline std::optional<LoadClass> parse_load_class(std::string_view s) {
    if (s == "residential") return LoadClass::residential;
    if (s == "commercial") return LoadClass::commercial;
    if (s == "industrial") return LoadClass::industrial;
    return std::nullopt;
}

/// Hourly multipliers of base load, 24-periodic.
struct Loadshape {
    std::string id;
    LoadClass load_class;
    std::vector<double> multipliers;

    double at(int hour) const { return multipliers[static_cast<std::size_t>(hour) % multipliers.size()]; }
};

/// Built-in archetypes, peak-normalized to 1.
inline const Loadshape& builtin_loadshape(LoadClass c) {
    static const std::array<Loadshape, 3> shapes{{
        {"residential", LoadClass::residential,
         {0.45, 0.40, 0.38, 0.37, 0.38, 0.45, 0.60, 0.70, 0.65, 0.58, 0.55, 0.54,
          0.53, 0.52, 0.54, 0.60, 0.72, 0.88, 0.98, 1.00, 0.95, 0.85, 0.70, 0.55}},
        {"commercial", LoadClass::commercial,
         {0.35, 0.33, 0.32, 0.32, 0.33, 0.38, 0.50, 0.70, 0.88, 0.96, 1.00, 1.00,
          0.98, 1.00, 0.99, 0.95, 0.88, 0.75, 0.60, 0.50, 0.45, 0.40, 0.38, 0.36}},
        {"industrial", LoadClass::industrial,
         {0.85, 0.85, 0.84, 0.84, 0.85, 0.88, 0.92, 0.96, 0.98, 1.00, 1.00, 0.99,
          0.98, 0.99, 1.00, 0.99, 0.97, 0.94, 0.91, 0.89, 0.88, 0.87, 0.86, 0.85}},
    }};
    return shapes[static_cast<std::size_t>(c)];
}

/// Plane-of-array irradiance as a fraction of rated output, plus ambient
/// temperature (carried for completeness, not used by the PV model).
struct IrradianceProfile {
    std::vector<double> fraction;
    std::vector<double> temperature_c;

    /// Clear-sky half-sine between 06:00 and 19:00 with a per-day clearness
    /// index and per-hour multiplicative cloud noise.
    static IrradianceProfile generate(int hours, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> clearness(0.6, 1.0);
        std::normal_distribution<double> cloud(0.0, 0.15), temp_noise(0.0, 1.0);
        IrradianceProfile p;
        double day_clear = 1.0;
        for (int h = 0; h < hours; ++h) {
            const int hod = h % 24;
            if (hod == 0) day_clear = clearness(rng);
            const double c = std::exp(-std::abs(cloud(rng)));
            double f = 0.0;
            if (hod > 6 && hod < 19) f = std::sin(std::numbers::pi * (hod - 6) / 13.0) * day_clear * c;
            p.fraction.push_back(std::clamp(f, 0.0, 1.0));
            p.temperature_c.push_back(22.0 + 8.0 * std::sin(std::numbers::pi * (hod - 9) / 12.0) + temp_noise(rng));
        }
        return p;
    }
};

enum class TargetKind { magnitude, angle };

struct ScenarioSettings {
    std::uint64_t seed = 0;
    /// Sigma of the log of the hourly feeder-wide load multiplier (median 1).
    double variability = 0.15;
    /// Sigma of an additional independent per-load lognormal factor.
    double per_load_variability = 0.0;
    /// Constant factor on every load (used for loading sweeps).
    double load_scale = 1.0;
    /// Replace every loadshape with a constant 1.0 profile.
    bool flat_loadshapes = false;
    TargetKind target = TargetKind::magnitude;
    int max_retries = 5;
    SolverOptions solver;
};

struct Dataset {
    Eigen::MatrixXd inputs;   ///< n x 2D, per-unit net load [p; q]
    Eigen::MatrixXd targets;  ///< n x D
    std::vector<int> timestamps;  ///< hours since the start of the series
    std::vector<double> multipliers;
    ScenarioSettings settings;
    std::string feeder_hash;

    Eigen::Index size() const { return inputs.rows(); }

    /// Rows [begin, begin + count).
    Dataset slice(Eigen::Index begin, Eigen::Index count) const {
        Dataset d;
        d.inputs = inputs.middleRows(begin, count);
        d.targets = targets.middleRows(begin, count);
        d.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + begin + count);
        d.multipliers.assign(multipliers.begin() + begin, multipliers.begin() + begin + count);
        d.settings = settings;
        d.feeder_hash = feeder_hash;
        return d;
    }

    std::string content_hash() const {
        Fnv1a h;
        h.update(inputs.data(), sizeof(double) * static_cast<std::size_t>(inputs.size()));
        h.update(targets.data(), sizeof(double) * static_cast<std::size_t>(targets.size()));
        return h.hex();
    }
};

/// Builds hourly net-load vectors for one feeder and settings.
class ScenarioGenerator {
  public:
    ScenarioGenerator(const Feeder& feeder, ScenarioSettings settings)
        : feeder_(feeder), settings_(std::move(settings)), solver_(feeder) {
        if (!(settings_.variability >= 0.0) || !(settings_.per_load_variability >= 0.0))
            throw ArgumentError("variability must be nonnegative");
        if (!(settings_.load_scale >= 0.0)) throw ArgumentError("load scale must be nonnegative");
        std::mt19937_64 rng(settings_.seed ^ 0x5ca1ab1eULL);
        std::uniform_int_distribution<int> pick(0, 2);
        for (const LoadPoint& ld : feeder.loads()) {
            auto c = parse_load_class(ld.loadshape);
            if (!c && ld.loadshape != "*")
                throw ValidationError("load at bus '" + ld.bus + "' uses unknown loadshape '" + ld.loadshape + "'");
            classes_.push_back(c ? *c : static_cast<LoadClass>(pick(rng)));
        }
    }

    const std::vector<LoadClass>& load_classes() const { return classes_; }

    /// Load demand at `hour` with feeder-wide multiplier `mult` and optional
    /// per-load factors (one per load, empty for none).
    NetLoadVector demand(int hour, double mult, const std::vector<double>& per_load = {}) const {
        NetLoadVector s = NetLoadVector::zeros(feeder_.dim());
        const double kva = feeder_.source().kva_base;
        const auto& loads = feeder_.loads();
        for (std::size_t i = 0; i < loads.size(); ++i) {
            const LoadPoint& ld = loads[i];
            const int n = feeder_.node_index(feeder_.bus_index(ld.bus), ld.phase);
            const double shape = settings_.flat_loadshapes ? 1.0 : builtin_loadshape(classes_[i]).at(hour);
            double f = settings_.load_scale * shape * mult;
            if (!per_load.empty()) f *= per_load[i];
            s.p(n) += f * ld.base_p_kw / kva;
            s.q(n) += f * ld.base_q_kvar / kva;
        }
        return s;
    }

    /// DER output (positive = injection) for an irradiance fraction.
    NetLoadVector der_injection(double irradiance) const {
        NetLoadVector s = NetLoadVector::zeros(feeder_.dim());
        const double kva = feeder_.source().kva_base;
        for (const DerUnit& d : feeder_.ders()) {
            const int b = feeder_.bus_index(d.bus);
            const double share = 1.0 / d.phases.size();
            for (Phase p : d.phases.phases()) {
                const int n = feeder_.node_index(b, p);
                s.p(n) += share * irradiance * d.rated_kw / kva;
                if (d.q_setpoint_kvar) s.q(n) += share * *d.q_setpoint_kvar / kva;
            }
        }
        return s;
    }

    /// Generates `hours` consecutive solved hours. A non-converging hour has
    /// its multipliers redrawn up to `max_retries` times.
    Dataset generate(int hours) const {
        if (hours < 1) throw ArgumentError("dataset needs at least one hour");
        const IrradianceProfile irr = IrradianceProfile::generate(hours, settings_.seed ^ 0x501a7ULL);
        std::mt19937_64 rng(settings_.seed);
        std::normal_distribution<double> z(0.0, 1.0);
        const int d = feeder_.dim();

        Dataset ds;
        ds.settings = settings_;
        ds.feeder_hash = feeder_hash(feeder_);
        ds.inputs.resize(hours, 2 * d);
        ds.targets.resize(hours, d);
        std::vector<double> per_load(feeder_.loads().size(), 1.0);
        for (int h = 0; h < hours; ++h) {
            for (int attempt = 0;; ++attempt) {
                const double mult = std::exp(settings_.variability * z(rng));
                if (settings_.per_load_variability > 0.0)
                    for (double& f : per_load) f = std::exp(settings_.per_load_variability * z(rng));
                NetLoadVector s = demand(h, mult, settings_.per_load_variability > 0.0 ? per_load : std::vector<double>{});
                s.values -= der_injection(irr.fraction[static_cast<std::size_t>(h)]).values;
                try {
                    PfSolution sol = solver_.solve(s, settings_.solver);
                    ds.inputs.row(h) = s.values.transpose();
                    ds.targets.row(h) = (settings_.target == TargetKind::magnitude ? sol.v_mag : sol.v_ang).transpose();
                    ds.timestamps.push_back(h);
                    ds.multipliers.push_back(mult);
                    break;
                } catch (const ConvergenceError& e) {
                    if (attempt >= settings_.max_retries)
                        throw ConvergenceError("hour " + std::to_string(h) + ": " + e.what());
                }
            }
        }
        return ds;
    }

  private:
    const Feeder& feeder_;
    ScenarioSettings settings_;
    SweepSolver solver_;
    std::vector<LoadClass> classes_;
};

inline Dataset generate_dataset(const Feeder& feeder, int hours, std::uint64_t seed, double variability = 0.15) {
    ScenarioSettings s;
    s.seed = seed;
    s.variability = variability;
    return ScenarioGenerator(feeder, s).generate(hours);
}

/// Chronological split: the first `train_hours` rows, then the next
/// `test_hours` rows.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, int train_hours, int test_hours) {
    if (train_hours < 1 || test_hours < 1) throw ArgumentError("train and test windows must be nonempty");
    if (ds.size() < static_cast<Eigen::Index>(train_hours) + test_hours)
        throw ArgumentError("insufficient data: " + std::to_string(ds.size()) + " rows for " +
                            std::to_string(train_hours) + " training + " + std::to_string(test_hours) + " test hours");
    return {ds.slice(0, train_hours), ds.slice(train_hours, test_hours)};
}

inline constexpr std::array<int, 4> kCaseHours{24, 168, 720, 2160};

/// Split for one of the standard training durations (24, 168, 720, 2160 h).
inline std::pair<Dataset, Dataset> split_cases(const Dataset& ds, int case_hours, int test_hours) {
    if (std::find(kCaseHours.begin(), kCaseHours.end(), case_hours) == kCaseHours.end())
        throw ArgumentError("case must be one of 24, 168, 720, 2160 hours");
    return split_train_test(ds, case_hours, test_hours);
}

// ---------------------------------------------------------------------------
// Persistence: inputs.csv, targets.csv, manifest.json
// ---------------------------------------------------------------------------

namespace detail {

inline void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                             const std::vector<int>& hours, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "hour";
    for (const auto& h : header) out << "," << h;
    out << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << hours[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << "," << format_number(m(i, j));
        out << "\n";
    }
}

inline Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, std::vector<int>* hours) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            if (!parse_number(cell, v)) throw ParseError(lineno, "bad number '" + cell + "' in " + path.string());
            if (first && hours) hours->push_back(static_cast<int>(v));
            if (!first) row.push_back(v);
            first = false;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError(lineno, "ragged row in " + path.string());
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

}  // namespace detail

inline std::vector<std::string> node_labels(const Feeder& feeder) {
    std::vector<std::string> out;
    for (const PhaseNode& n : feeder.nodes()) out.push_back(n.bus + "." + phase_char(n.phase));
    return out;
}

inline void save_dataset(const Dataset& ds, const Feeder& feeder, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto labels = node_labels(feeder);
    std::vector<std::string> in_header;
    for (const auto& l : labels) in_header.push_back("p_" + l);
    for (const auto& l : labels) in_header.push_back("q_" + l);
    std::vector<std::string> out_header;
    const char* prefix = ds.settings.target == TargetKind::magnitude ? "vmag_" : "vang_";
    for (const auto& l : labels) out_header.push_back(prefix + l);
    detail::write_matrix_csv(dir / "inputs.csv", in_header, ds.timestamps, ds.inputs);
    detail::write_matrix_csv(dir / "targets.csv", out_header, ds.timestamps, ds.targets);

    nlohmann::json m;
    m["format"] = "gppf-dataset";
    m["version"] = 1;
    m["rows"] = ds.size();
    m["phase_nodes"] = feeder.dim();
    m["seed"] = ds.settings.seed;
    m["variability"] = ds.settings.variability;
    m["per_load_variability"] = ds.settings.per_load_variability;
    m["load_scale"] = ds.settings.load_scale;
    m["flat_loadshapes"] = ds.settings.flat_loadshapes;
    m["target"] = ds.settings.target == TargetKind::magnitude ? "magnitude" : "angle";
    m["multiplier_distribution"] = "lognormal, median 1, feeder-wide per hour";
    m["loadshape_assignment"] = "uniform random per load for '*' entries, seeded";
    m["irradiance"] = "synthetic clear-sky half-sine with cloud noise, seeded";
    m["feeder_hash"] = ds.feeder_hash;
    m["content_hash"] = ds.content_hash();
    m["multipliers"] = ds.multipliers;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest in '" + dir.string() + "'");
    out << m.dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("missing manifest.json in '" + dir.string() + "'");
    const nlohmann::json m = nlohmann::json::parse(in);
    Dataset ds;
    ds.inputs = detail::read_matrix_csv(dir / "inputs.csv", &ds.timestamps);
    ds.targets = detail::read_matrix_csv(dir / "targets.csv", nullptr);
    ds.settings.seed = m.at("seed").get<std::uint64_t>();
    ds.settings.variability = m.at("variability").get<double>();
    ds.settings.per_load_variability = m.value("per_load_variability", 0.0);
    ds.settings.load_scale = m.value("load_scale", 1.0);
    ds.settings.flat_loadshapes = m.value("flat_loadshapes", false);
    ds.settings.target = m.value("target", "magnitude") == "angle" ? TargetKind::angle : TargetKind::magnitude;
    ds.feeder_hash = m.at("feeder_hash").get<std::string>();
    ds.multipliers = m.at("multipliers").get<std::vector<double>>();
    if (ds.inputs.rows() != ds.targets.rows()) throw IoError("inputs.csv and targets.csv differ in row count");
    return ds;
}

}  // namespace gppf
