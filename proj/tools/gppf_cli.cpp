// gppf: command-line front end for feeder generation, dataset generation and
// surrogate benchmarking.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gppf/bench.hpp"

namespace {

using nlohmann::json;

int fail(const std::string& kind, const std::string& message, int code) {
    json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << j.dump() << "\n";
    return code;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-process power flow surrogates on radial distribution feeders"};
    app.require_subcommand(1);

    // gen-feeder
    auto* gf = app.add_subcommand("gen-feeder", "Generate a feeder description");
    std::string gf_style = "synthetic", gf_mix = "mixed", gf_placement = "all", gf_out;
    int gf_buses = 25, gf_ders = 0;
    std::uint64_t gf_seed = 0;
    double gf_drop = 0.04;
    gf->add_option("--style", gf_style, "synthetic or ieee123")->check(CLI::IsMember({"synthetic", "ieee123"}));
    gf->add_option("--buses", gf_buses, "Bus count including the source")->check(CLI::PositiveNumber);
    gf->add_option("--mix", gf_mix, "Phase mix: single, three or mixed");
    gf->add_option("--ders", gf_ders, "Number of DER units")->check(CLI::NonNegativeNumber);
    gf->add_option("--seed", gf_seed, "Generator seed");
    gf->add_option("--placement", gf_placement, "Load placement: all or leaves");
    gf->add_option("--drop", gf_drop, "Target peak voltage drop (p.u.)");
    gf->add_option("-o,--out", gf_out, "Output file (stdout when omitted)");

    // gen-data
    auto* gd = app.add_subcommand("gen-data", "Generate an hourly dataset with the nonlinear solver");
    std::string gd_feeder, gd_out, gd_target = "magnitude";
    int gd_hours = 168;
    gppf::ScenarioSettings gd_settings;
    gd_settings.seed = 1;
    gd->add_option("--feeder", gd_feeder, "Feeder file, ieee123-style[:seed] or synthetic:key=value,...")->required();
    gd->add_option("--hours", gd_hours, "Number of hours")->check(CLI::PositiveNumber);
    gd->add_option("--seed", gd_settings.seed, "Scenario seed");
    gd->add_option("--variability", gd_settings.variability, "Sigma of the lognormal load multiplier");
    gd->add_option("--per-load-variability", gd_settings.per_load_variability, "Sigma of an extra per-load factor");
    gd->add_option("--load-scale", gd_settings.load_scale, "Constant factor on every load");
    gd->add_flag("--flat-loadshapes", gd_settings.flat_loadshapes, "Constant loadshapes instead of the daily archetypes");
    gd->add_option("--target", gd_target, "magnitude or angle")->check(CLI::IsMember({"magnitude", "angle"}));
    gd->add_option("-o,--out", gd_out, "Output directory")->required();

    // run-case
    auto* rc = app.add_subcommand("run-case", "Train and score models on one case");
    std::string rc_feeder, rc_out, rc_models = "GP,DNN,LDF";
    std::optional<int> rc_case, rc_train;
    std::optional<int> rc_epochs;
    gppf::CaseSpec rc_spec;
    rc->add_option("--feeder", rc_feeder, "Feeder file, ieee123-style[:seed] or synthetic:key=value,...")->required();
    auto* rc_case_opt = rc->add_option("--case", rc_case, "Standard case 1-4 (24, 168, 720, 2160 training hours)");
    rc_case_opt->check(CLI::Range(1, 4));
    rc->add_option("--train-hours", rc_train, "Explicit training size")->excludes(rc_case_opt)->check(CLI::PositiveNumber);
    rc->add_option("--test-hours", rc_spec.test_hours, "Held-out hours after the training window")
        ->check(CLI::PositiveNumber);
    rc->add_option("--models", rc_models, "Comma-separated subset of GP,DNN,LDF");
    rc->add_option("--seed", rc_spec.seed, "Seed for data, GP restarts and DNN training");
    rc->add_option("--variability", rc_spec.variability, "Sigma of the lognormal load multiplier");
    rc->add_flag("--flat-loadshapes", rc_spec.flat_loadshapes, "Constant loadshapes instead of the daily archetypes");
    rc->add_option("--gp-restarts", rc_spec.gp.extra_restarts, "Extra random GP restarts")->check(CLI::NonNegativeNumber);
    rc->add_option("--epochs", rc_epochs, "Override the DNN epoch count")->check(CLI::PositiveNumber);
    rc->add_option("-o,--out", rc_out, "Output directory")->required();

    // run-generalization
    auto* rg = app.add_subcommand("run-generalization", "GP trained on a short window, tested on the following hours");
    std::string rg_feeder, rg_out;
    gppf::GeneralizationSpec rg_spec;
    rg->add_option("--feeder", rg_feeder, "Feeder file, ieee123-style[:seed] or synthetic:key=value,...")->required();
    rg->add_option("--train-hours", rg_spec.train_hours, "Training hours")->check(CLI::PositiveNumber);
    rg->add_option("--test-hours", rg_spec.test_hours, "Test hours")->check(CLI::PositiveNumber);
    rg->add_option("--seed", rg_spec.seed, "Seed");
    rg->add_option("--variability", rg_spec.variability, "Sigma of the lognormal load multiplier");
    rg->add_flag("--flat-loadshapes", rg_spec.flat_loadshapes, "Constant loadshapes instead of the daily archetypes");
    rg->add_option("-o,--out", rg_out, "Output directory (optional)");

    // emit-plots
    auto* ep = app.add_subcommand("emit-plots", "Write plot-ready CSV files from a run-case directory");
    std::string ep_dir, ep_bus;
    std::vector<std::string> ep_kinds;
    std::vector<int> ep_hours;
    ep->add_option("--dir", ep_dir, "run-case output directory")->required();
    ep->add_option("--kind", ep_kinds, "voltage-profile-snapshot, per-bus-mae or time-series-3phase (default: all)");
    ep->add_option("--hour", ep_hours, "Snapshot hour(s)");
    ep->add_option("--bus", ep_bus, "Bus for the time series");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("argument", e.what(), 2);
    }

    try {
        if (*gf) {
            gppf::Feeder feeder = [&] {
                if (gf_style == "ieee123") return gppf::make_ieee123_style_feeder(gf->count("--seed") ? gf_seed : 123);
                gppf::SyntheticFeederSpec spec;
                spec.buses = gf_buses;
                spec.phase_mix = gppf::parse_phase_mix(gf_mix);
                spec.ders = gf_ders;
                spec.seed = gf_seed;
                spec.target_peak_drop = gf_drop;
                if (gf_placement == "all") spec.load_placement = gppf::LoadPlacement::all;
                else if (gf_placement == "leaves") spec.load_placement = gppf::LoadPlacement::leaves;
                else throw gppf::ArgumentError("placement must be all or leaves");
                return gppf::generate_synthetic_feeder(spec);
            }();
            const std::string text = gppf::emit_feeder(feeder);
            if (gf_out.empty()) {
                std::cout << text;
            } else {
                std::ofstream out(gf_out);
                if (!out) throw gppf::IoError("cannot write '" + gf_out + "'");
                out << text;
                print({{"file", gf_out},
                       {"buses", feeder.buses().size()},
                       {"phase_nodes", feeder.dim()},
                       {"loads", feeder.loads().size()},
                       {"ders", feeder.ders().size()},
                       {"feeder_hash", gppf::feeder_hash(feeder)}});
            }
        } else if (*gd) {
            const gppf::Feeder feeder = gppf::load_feeder_source(gd_feeder);
            gd_settings.target = gd_target == "angle" ? gppf::TargetKind::angle : gppf::TargetKind::magnitude;
            const gppf::Dataset ds = gppf::ScenarioGenerator(feeder, gd_settings).generate(gd_hours);
            gppf::save_dataset(ds, feeder, gd_out);
            print({{"dir", gd_out},
                   {"rows", ds.size()},
                   {"inputs", ds.inputs.cols()},
                   {"targets", ds.targets.cols()},
                   {"content_hash", ds.content_hash()}});
        } else if (*rc) {
            rc_spec.models = gppf::parse_model_list(rc_models);
            if (rc_train) {
                rc_spec.train_hours = *rc_train;
                rc_spec.case_id = "n" + std::to_string(*rc_train);
            } else {
                const int c = rc_case.value_or(1);
                rc_spec.train_hours = gppf::case_train_hours(c);
                rc_spec.case_id = std::to_string(c);
            }
            rc_spec.gp.seed = rc_spec.seed;
            const gppf::Feeder feeder = gppf::load_feeder_source(rc_feeder);
            if (rc_epochs) {
                gppf::MlpConfig cfg = gppf::MlpConfig::for_feeder(feeder.dim());
                cfg.seed = rc_spec.seed;
                cfg.epochs = *rc_epochs;
                rc_spec.mlp = cfg;
            }
            const gppf::CaseResult res = gppf::run_case(feeder, rc_spec, std::filesystem::path(rc_out));
            json out = json::array();
            for (const auto& r : res.reports) out.push_back(r.to_json());
            print({{"dir", rc_out}, {"reports", out}});
        } else if (*rg) {
            const gppf::Feeder feeder = gppf::load_feeder_source(rg_feeder);
            rg_spec.gp.seed = rg_spec.seed;
            std::optional<std::filesystem::path> dir;
            if (!rg_out.empty()) dir = rg_out;
            const auto s = gppf::run_generalization(feeder, rg_spec, dir);
            print(s.to_json());
        } else if (*ep) {
            std::vector<gppf::PlotKind> kinds;
            if (ep_kinds.empty())
                kinds = {gppf::PlotKind::voltage_profile_snapshot, gppf::PlotKind::per_bus_mae,
                         gppf::PlotKind::time_series_3phase};
            for (const auto& k : ep_kinds) kinds.push_back(gppf::parse_plot_kind(k));
            gppf::PlotOptions opts;
            opts.hours = ep_hours;
            opts.bus = ep_bus;
            json files = json::array();
            for (auto k : kinds) files.push_back(gppf::emit_plot_data(ep_dir, k, opts).string());
            print({{"files", files}});
        }
    } catch (const gppf::Error& e) {
        return fail(e.kind(), e.what(), e.kind() == "argument" ? 2 : 1);
    } catch (const nlohmann::json::exception& e) {
        return fail("io", e.what(), 1);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
    return 0;
}
