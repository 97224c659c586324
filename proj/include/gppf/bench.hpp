#pragma once

// Benchmark harness: trains the surrogates on a shared chronological split,
// scores them against the nonlinear oracle and writes report directories.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "gppf/common.hpp"
#include "gppf/feeder.hpp"
#include "gppf/gp.hpp"
#include "gppf/lindistflow.hpp"
#include "gppf/metrics.hpp"
#include "gppf/mlp.hpp"
#include "gppf/scenario.hpp"
#include "gppf/synthetic.hpp"

namespace gppf {

enum class ModelId { LDF, DNN, GP };

inline const char* to_string(ModelId m) {
    switch (m) {
        case ModelId::LDF: return "LDF";
        case ModelId::DNN: return "DNN";
        case ModelId::GP: return "GP";
    }
    return "?";
}

inline ModelId parse_model_id(std::string_view s) {
    if (s == "LDF" || s == "ldf") return ModelId::LDF;
    if (s == "DNN" || s == "dnn" || s == "MLP" || s == "mlp") return ModelId::DNN;
    if (s == "GP" || s == "gp") return ModelId::GP;
    throw ArgumentError("unknown model id '" + std::string(s) + "' (LDF|DNN|GP)");
}

/// Parses a comma-separated model list, e.g. "GP,DNN,LDF". Duplicates are
/// dropped; order is kept.
inline std::vector<ModelId> parse_model_list(std::string_view s) {
    std::vector<ModelId> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t comma = s.find(',', pos);
        if (comma == std::string_view::npos) comma = s.size();
        std::string_view tok = s.substr(pos, comma - pos);
        if (!tok.empty()) {
            ModelId m = parse_model_id(tok);
            if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
        }
        pos = comma + 1;
    }
    if (out.empty()) throw ArgumentError("model list is empty");
    return out;
}

/// Training hours of the four standard cases (1 day, 7 days, 30 days, 90 days).
inline int case_train_hours(int case_number) {
    if (case_number < 1 || case_number > 4) throw ArgumentError("case must be 1, 2, 3 or 4");
    return kCaseHours[static_cast<std::size_t>(case_number - 1)];
}

/// Resolves a feeder source string:
///   ieee123-style[:seed]
///   synthetic:buses=25,ders=10,seed=7,mix=mixed,placement=all,drop=0.04
///   anything else is read as a feeder file path.
inline Feeder load_feeder_source(const std::string& src) {
    if (src == "ieee123-style" || src.rfind("ieee123-style:", 0) == 0) {
        std::uint64_t seed = 123;
        if (src.size() > 14) {
            double v = 0;
            if (!parse_number(std::string_view(src).substr(14), v) || v < 0)
                throw ArgumentError("bad seed in feeder source '" + src + "'");
            seed = static_cast<std::uint64_t>(v);
        }
        return make_ieee123_style_feeder(seed);
    }
    if (src.rfind("synthetic:", 0) == 0 || src == "synthetic") {
        SyntheticFeederSpec spec;
        std::string_view rest = src.size() > 10 ? std::string_view(src).substr(10) : std::string_view{};
        std::size_t pos = 0;
        while (pos < rest.size()) {
            std::size_t comma = rest.find(',', pos);
            if (comma == std::string_view::npos) comma = rest.size();
            const std::string_view kv = rest.substr(pos, comma - pos);
            pos = comma + 1;
            const std::size_t eq = kv.find('=');
            if (eq == std::string_view::npos) throw ArgumentError("expected key=value in '" + std::string(kv) + "'");
            const std::string_view key = kv.substr(0, eq), val = kv.substr(eq + 1);
            double num = 0;
            const bool is_num = parse_number(val, num);
            auto need = [&]() {
                if (!is_num) throw ArgumentError("'" + std::string(key) + "' needs a number");
                return num;
            };
            if (key == "buses") spec.buses = static_cast<int>(need());
            else if (key == "ders") spec.ders = static_cast<int>(need());
            else if (key == "seed") spec.seed = static_cast<std::uint64_t>(need());
            else if (key == "drop") spec.target_peak_drop = need();
            else if (key == "mix") spec.phase_mix = parse_phase_mix(val);
            else if (key == "placement") {
                if (val == "all") spec.load_placement = LoadPlacement::all;
                else if (val == "leaves") spec.load_placement = LoadPlacement::leaves;
                else throw ArgumentError("placement must be all or leaves");
            } else {
                throw ArgumentError("unknown synthetic feeder key '" + std::string(key) + "'");
            }
        }
        return generate_synthetic_feeder(spec);
    }
    if (!std::filesystem::exists(src)) throw IoError("feeder file '" + src + "' not found");
    return load_feeder_file(src);
}

struct CaseSpec {
    std::string case_id = "1";
    int train_hours = 24;
    int test_hours = 144;
    std::vector<ModelId> models{ModelId::GP, ModelId::DNN, ModelId::LDF};
    std::uint64_t seed = 1;
    double variability = 0.15;
    bool flat_loadshapes = false;
    GpConfig gp;
    /// Defaults to MlpConfig::for_feeder(D) seeded with `seed`.
    std::optional<MlpConfig> mlp;
};

struct CaseReport {
    std::string case_id;
    ModelId model = ModelId::GP;
    int train_size = 0;
    int test_size = 0;
    ErrorReport errors;
    double train_seconds = 0.0;
    double predict_seconds = 0.0;
    std::uint64_t seed = 0;
    std::string feeder_hash;
    std::string train_hash;
    std::string test_hash;

    /// Timing columns are left out so that reruns give byte-identical files.
    static std::string csv_header() {
        return "case,model,train_size,test_size," + ErrorReport::csv_header() + ",seed,feeder_hash,train_hash,test_hash";
    }
    std::string csv_row() const {
        return case_id + "," + to_string(model) + "," + std::to_string(train_size) + "," + std::to_string(test_size) +
               "," + errors.csv_row() + "," + std::to_string(seed) + "," + feeder_hash + "," + train_hash + "," +
               test_hash;
    }
    nlohmann::json to_json() const {
        nlohmann::json j = errors.to_json();
        j["case"] = case_id;
        j["model"] = to_string(model);
        j["train_size"] = train_size;
        j["test_size"] = test_size;
        j["train_seconds"] = train_seconds;
        j["predict_seconds"] = predict_seconds;
        j["seed"] = seed;
        j["feeder_hash"] = feeder_hash;
        j["train_hash"] = train_hash;
        j["test_hash"] = test_hash;
        return j;
    }
};

struct CaseResult {
    std::vector<CaseReport> reports;
    Dataset train;
    Dataset test;
    std::map<ModelId, Eigen::MatrixXd> predictions;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Eigen::MatrixXd ldf_predict(const Feeder& feeder, const Eigen::MatrixXd& inputs) {
    Eigen::MatrixXd out(inputs.rows(), feeder.dim());
    for (Eigen::Index i = 0; i < inputs.rows(); ++i)
        out.row(i) = ldf_voltage_mag(solve_ldf(feeder, NetLoadVector(inputs.row(i).transpose()))).transpose();
    return out;
}

}  // namespace detail

/// Trains and scores every requested model on one fixed split.
inline CaseResult evaluate_models(const Feeder& feeder, const Dataset& train, const Dataset& test, const CaseSpec& spec) {
    if (spec.models.empty()) throw ArgumentError("model list is empty");
    if (train.inputs.cols() != 2 * feeder.dim() || test.inputs.cols() != 2 * feeder.dim())
        throw DimensionError("dataset does not match the feeder dimension");
    CaseResult res;
    res.train = train;
    res.test = test;
    const std::string fh = feeder_hash(feeder), trh = train.content_hash(), teh = test.content_hash();
    for (ModelId id : spec.models) {
        CaseReport r;
        r.case_id = spec.case_id;
        r.model = id;
        r.train_size = static_cast<int>(train.size());
        r.test_size = static_cast<int>(test.size());
        r.seed = spec.seed;
        r.feeder_hash = fh;
        r.train_hash = trh;
        r.test_hash = teh;
        Eigen::MatrixXd pred;
        try {
            auto t0 = std::chrono::steady_clock::now();
            switch (id) {
                case ModelId::LDF: {
                    // No fitting; the comparable cost is solving the training hours.
                    detail::ldf_predict(feeder, train.inputs);
                    r.train_seconds = detail::seconds_since(t0);
                    t0 = std::chrono::steady_clock::now();
                    pred = detail::ldf_predict(feeder, test.inputs);
                    break;
                }
                case ModelId::DNN: {
                    MlpConfig cfg = spec.mlp ? *spec.mlp : MlpConfig::for_feeder(feeder.dim());
                    if (!spec.mlp) cfg.seed = spec.seed;
                    if (cfg.widths.empty()) cfg.widths = MlpConfig::for_feeder(feeder.dim()).widths;
                    const MlpModel m = train_mlp(train.inputs, train.targets, cfg);
                    r.train_seconds = detail::seconds_since(t0);
                    t0 = std::chrono::steady_clock::now();
                    pred = predict_mlp(m, test.inputs);
                    break;
                }
                case ModelId::GP: {
                    const GpModel m = GpModel::fit(train.inputs, train.targets, spec.gp);
                    r.train_seconds = detail::seconds_since(t0);
                    t0 = std::chrono::steady_clock::now();
                    pred = m.predict(test.inputs).mean;
                    break;
                }
            }
            r.predict_seconds = detail::seconds_since(t0);
        } catch (const Error& e) {
            throw Error(e.kind(), "case " + spec.case_id + ", model " + to_string(id) + ": " + e.what());
        }
        r.errors = compute_errors(pred, test.targets);
        res.predictions[id] = std::move(pred);
        res.reports.push_back(std::move(r));
    }
    return res;
}

/// Writes manifest.json, reports.csv, truth.csv, nodes.csv and
/// predictions/<MODEL>.csv into `dir`.
inline void write_case_outputs(const std::filesystem::path& dir, const Feeder& feeder, const CaseSpec& spec,
                               const CaseResult& res) {
    std::filesystem::create_directories(dir / "predictions");
    const auto header = node_labels(feeder);

    detail::write_matrix_csv(dir / "truth.csv", header, res.test.timestamps, res.test.targets);
    for (const auto& [id, pred] : res.predictions)
        detail::write_matrix_csv(dir / "predictions" / (std::string(to_string(id)) + ".csv"), header,
                                 res.test.timestamps, pred);
    {
        std::ofstream out(dir / "reports.csv");
        if (!out) throw IoError("cannot write reports.csv in '" + dir.string() + "'");
        out << CaseReport::csv_header() << "\n";
        for (const auto& r : res.reports) out << r.csv_row() << "\n";
    }
    {
        std::ofstream out(dir / "nodes.csv");
        if (!out) throw IoError("cannot write nodes.csv in '" + dir.string() + "'");
        out << "order,bus,phase,depth\n";
        for (int i = 0; i < feeder.dim(); ++i) {
            const PhaseNode& n = feeder.nodes()[static_cast<std::size_t>(i)];
            out << i << "," << n.bus << "," << phase_char(n.phase) << "," << feeder.depth(feeder.node_bus(i)) << "\n";
        }
    }
    nlohmann::json m;
    m["format"] = "gppf-case";
    m["version"] = 1;
    m["case"] = spec.case_id;
    m["train_hours"] = spec.train_hours;
    m["test_hours"] = spec.test_hours;
    m["seed"] = spec.seed;
    m["variability"] = spec.variability;
    m["flat_loadshapes"] = spec.flat_loadshapes;
    m["phase_nodes"] = feeder.dim();
    m["feeder_hash"] = feeder_hash(feeder);
    m["models"] = nlohmann::json::array();
    for (const auto& r : res.reports) m["models"].push_back(to_string(r.model));
    m["reports"] = nlohmann::json::array();
    for (const auto& r : res.reports) m["reports"].push_back(r.to_json());
    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest.json in '" + dir.string() + "'");
    out << m.dump(2) << "\n";
}

/// Generates train + test hours, splits chronologically and evaluates.
/// Model ids are checked before any data is generated.
inline CaseResult run_case(const Feeder& feeder, const CaseSpec& spec,
                           const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
    if (spec.models.empty()) throw ArgumentError("model list is empty");
    if (spec.train_hours < 1 || spec.test_hours < 1) throw ArgumentError("train and test hours must be positive");
    ScenarioSettings settings;
    settings.seed = spec.seed;
    settings.variability = spec.variability;
    settings.flat_loadshapes = spec.flat_loadshapes;
    const Dataset ds = ScenarioGenerator(feeder, settings).generate(spec.train_hours + spec.test_hours);
    auto [train, test] = split_train_test(ds, spec.train_hours, spec.test_hours);
    CaseResult res = evaluate_models(feeder, train, test, spec);
    if (out_dir) write_case_outputs(*out_dir, feeder, spec, res);
    return res;
}

// ---------------------------------------------------------------------------
// Generalization summary
// ---------------------------------------------------------------------------

struct GeneralizationSummary {
    double avg_mae = 0.0;
    double avg_mse = 0.0;
    double max_error = 0.0;
    double min_error = 0.0;
    int train_hours = 0;
    int test_hours = 0;
    double train_seconds = 0.0;
    double predict_seconds = 0.0;
    double total_seconds = 0.0;
    std::string feeder_hash;
    int phase_nodes = 0;

    static std::string csv_header() { return "train_hours,test_hours,phase_nodes,avg_mae,avg_mse,max_error,min_error"; }
    std::string csv_row() const {
        return std::to_string(train_hours) + "," + std::to_string(test_hours) + "," + std::to_string(phase_nodes) + "," +
               format_number(avg_mae) + "," + format_number(avg_mse) + "," + format_number(max_error) + "," +
               format_number(min_error);
    }
    nlohmann::json to_json() const {
        return {{"train_hours", train_hours}, {"test_hours", test_hours},   {"phase_nodes", phase_nodes},
                {"avg_mae", avg_mae},         {"avg_mse", avg_mse},         {"max_error", max_error},
                {"min_error", min_error},     {"train_seconds", train_seconds}, {"predict_seconds", predict_seconds},
                {"total_seconds", total_seconds}, {"feeder_hash", feeder_hash}};
    }
};

struct GeneralizationSpec {
    int train_hours = 24;
    int test_hours = 144;
    std::uint64_t seed = 1;
    double variability = 0.15;
    bool flat_loadshapes = false;
    GpConfig gp;
};

/// GP trained on the first `train_hours`, scored on the following `test_hours`.
inline GeneralizationSummary run_generalization(const Feeder& feeder, const GeneralizationSpec& g = {},
                                                const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
    const auto t0 = std::chrono::steady_clock::now();
    CaseSpec spec;
    spec.case_id = "generalization";
    spec.train_hours = g.train_hours;
    spec.test_hours = g.test_hours;
    spec.models = {ModelId::GP};
    spec.seed = g.seed;
    spec.variability = g.variability;
    spec.flat_loadshapes = g.flat_loadshapes;
    spec.gp = g.gp;
    const CaseResult res = run_case(feeder, spec, out_dir);
    const CaseReport& r = res.reports.front();

    GeneralizationSummary s;
    s.avg_mae = r.errors.mae;
    s.avg_mse = r.errors.mse;
    s.max_error = r.errors.max_abs_error;
    s.min_error = r.errors.min_abs_error;
    s.train_hours = g.train_hours;
    s.test_hours = g.test_hours;
    s.train_seconds = r.train_seconds;
    s.predict_seconds = r.predict_seconds;
    s.feeder_hash = r.feeder_hash;
    s.phase_nodes = feeder.dim();
    s.total_seconds = detail::seconds_since(t0);
    if (out_dir) {
        std::ofstream out(*out_dir / "summary.csv");
        if (!out) throw IoError("cannot write summary.csv in '" + out_dir->string() + "'");
        out << GeneralizationSummary::csv_header() << "\n" << s.csv_row() << "\n";
    }
    return s;
}

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

enum class PlotKind { voltage_profile_snapshot, per_bus_mae, time_series_3phase };

inline PlotKind parse_plot_kind(std::string_view s) {
    if (s == "voltage-profile-snapshot") return PlotKind::voltage_profile_snapshot;
    if (s == "per-bus-mae") return PlotKind::per_bus_mae;
    if (s == "time-series-3phase") return PlotKind::time_series_3phase;
    throw ArgumentError("unknown figure kind '" + std::string(s) +
                        "' (voltage-profile-snapshot|per-bus-mae|time-series-3phase)");
}

struct PlotOptions {
    /// Hours for the snapshot; empty means the first test hour.
    std::vector<int> hours;
    /// Bus for the time series; empty means the deepest bus carrying the most phases.
    std::string bus;
};

namespace detail {

struct CaseArtifacts {
    struct Node {
        std::string bus;
        char phase;
        int depth;
    };
    std::vector<Node> nodes;
    std::vector<int> hours;
    Eigen::MatrixXd truth;
    std::vector<std::pair<std::string, Eigen::MatrixXd>> predictions;
};

inline CaseArtifacts read_case_artifacts(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "manifest.json"))
        throw IoError("missing manifest.json in '" + dir.string() + "'; run run-case first");
    std::ifstream mf(dir / "manifest.json");
    const nlohmann::json m = nlohmann::json::parse(mf);
    CaseArtifacts a;
    {
        std::ifstream in(dir / "nodes.csv");
        if (!in) throw IoError("missing nodes.csv in '" + dir.string() + "'");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::stringstream ss(line);
            for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
            if (f.size() != 4 || f[2].size() != 1) throw IoError("malformed nodes.csv row '" + line + "'");
            a.nodes.push_back({f[1], f[2][0], std::stoi(f[3])});
        }
    }
    if (!std::filesystem::exists(dir / "truth.csv")) throw IoError("missing truth.csv in '" + dir.string() + "'");
    a.truth = read_matrix_csv(dir / "truth.csv", &a.hours);
    for (const auto& id : m.at("models")) {
        const std::string name = id.get<std::string>();
        const auto p = dir / "predictions" / (name + ".csv");
        if (!std::filesystem::exists(p)) throw IoError("missing predictions for " + name);
        Eigen::MatrixXd pred = read_matrix_csv(p, nullptr);
        if (pred.rows() != a.truth.rows() || pred.cols() != a.truth.cols())
            throw IoError("predictions for " + name + " do not match truth.csv");
        a.predictions.emplace_back(name, std::move(pred));
    }
    if (a.truth.cols() != static_cast<Eigen::Index>(a.nodes.size()))
        throw IoError("truth.csv and nodes.csv disagree on the node count");
    return a;
}

}  // namespace detail

/// Reads a run-case directory and writes `plots/<kind>.csv`. Returns the path.
inline std::filesystem::path emit_plot_data(const std::filesystem::path& dir, PlotKind kind,
                                            const PlotOptions& opts = {}) {
    const detail::CaseArtifacts a = detail::read_case_artifacts(dir);
    std::filesystem::create_directories(dir / "plots");
    const Eigen::Index d = a.truth.cols();
    std::filesystem::path path;
    std::ostringstream out;

    switch (kind) {
        case PlotKind::voltage_profile_snapshot: {
            path = dir / "plots" / "voltage-profile-snapshot.csv";
            std::vector<int> hours = opts.hours;
            if (hours.empty() && !a.hours.empty()) hours.push_back(a.hours.front());
            out << "hour,model,order,bus,phase,depth,voltage\n";
            for (int h : hours) {
                auto it = std::find(a.hours.begin(), a.hours.end(), h);
                if (it == a.hours.end()) throw ArgumentError("hour " + std::to_string(h) + " is not in the test window");
                const Eigen::Index row = it - a.hours.begin();
                auto emit = [&](const std::string& model, const Eigen::MatrixXd& m) {
                    for (Eigen::Index j = 0; j < d; ++j) {
                        const auto& n = a.nodes[static_cast<std::size_t>(j)];
                        out << h << "," << model << "," << j << "," << n.bus << "," << n.phase << "," << n.depth << ","
                            << format_number(m(row, j)) << "\n";
                    }
                };
                emit("TRUTH", a.truth);
                for (const auto& [name, pred] : a.predictions) emit(name, pred);
            }
            break;
        }
        case PlotKind::per_bus_mae: {
            path = dir / "plots" / "per-bus-mae.csv";
            out << "order,bus,phase,depth";
            for (const auto& p : a.predictions) out << ",mae_" << p.first;
            out << "\n";
            std::vector<Eigen::VectorXd> mae;
            for (const auto& p : a.predictions) mae.push_back(compute_errors(p.second, a.truth).per_output_mae);
            for (Eigen::Index j = 0; j < d; ++j) {
                const auto& n = a.nodes[static_cast<std::size_t>(j)];
                out << j << "," << n.bus << "," << n.phase << "," << n.depth;
                for (const auto& v : mae) out << "," << format_number(v[j]);
                out << "\n";
            }
            break;
        }
        case PlotKind::time_series_3phase: {
            path = dir / "plots" / "time-series-3phase.csv";
            std::string bus = opts.bus;
            if (bus.empty()) {
                // Deepest bus among those with the most phases.
                std::map<std::string, std::pair<int, int>> info;  // bus -> (phases, depth)
                for (const auto& n : a.nodes) {
                    auto& e = info[n.bus];
                    ++e.first;
                    e.second = n.depth;
                }
                std::pair<int, int> best{-1, -1};
                for (const auto& n : a.nodes) {
                    const auto e = info[n.bus];
                    if (e > best) {
                        best = e;
                        bus = n.bus;
                    }
                }
            }
            std::vector<Eigen::Index> cols;
            for (Eigen::Index j = 0; j < d; ++j)
                if (a.nodes[static_cast<std::size_t>(j)].bus == bus) cols.push_back(j);
            if (cols.empty()) throw ArgumentError("bus '" + bus + "' has no phase-nodes in this case");
            out << "hour,model,bus,phase,voltage\n";
            auto emit = [&](const std::string& model, const Eigen::MatrixXd& m) {
                for (Eigen::Index i = 0; i < m.rows(); ++i)
                    for (Eigen::Index j : cols)
                        out << a.hours[static_cast<std::size_t>(i)] << "," << model << "," << bus << ","
                            << a.nodes[static_cast<std::size_t>(j)].phase << "," << format_number(m(i, j)) << "\n";
            };
            emit("TRUTH", a.truth);
            for (const auto& [name, pred] : a.predictions) emit(name, pred);
            break;
        }
    }
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << out.str();
    return path;
}

}  // namespace gppf
