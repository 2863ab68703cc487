#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "qkdnet/calibration.hpp"
#include "qkdnet/engine.hpp"
#include "qkdnet/presets.hpp"

namespace fs = std::filesystem;
using namespace qkdnet;

namespace {

int cmd_calibrate(const std::string& table_path, const std::string& anchors_path,
                  const std::string& out_path) {
    auto rows = parse_link_table_csv(read_text_file(table_path));
    auto anchors = parse_anchors_json(read_text_file(anchors_path));
    CalibratedParams cal = calibrate(rows, anchors);
    save_calibrated_params(cal, out_path);
    std::printf("calibrated %zu rows -> %s\n", cal.rows.size(), out_path.c_str());
    std::printf("  budget residual max %.4f dB\n", cal.residuals.budget_max_abs_db);
    std::printf("  qber residual max   %.4f pp\n", cal.residuals.qber_max_abs_pp);
    std::printf("  skr rel error       rms %.4f max %.4f\n", cal.residuals.skr_rms_rel,
                cal.residuals.skr_max_rel);
    return 0;
}

int cmd_preset(const std::string& name, const std::string& params_path,
               const std::string& out_dir) {
    CalibratedParams cal = load_calibrated_params(params_path);
    auto files = build_preset(cal, name);
    for (const auto& path : emit_report(files, out_dir))
        std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_run(const std::string& scenario_path, std::uint64_t seed, bool seed_set,
            const std::string& params_override, const std::string& out_dir) {
    Scenario sc = load_scenario_file(scenario_path);
    if (seed_set) sc.seed = seed;
    std::string params_path = params_override.empty() ? sc.params_file : params_override;
    if (params_path.empty())
        throw UncalibratedError("no calibrated params: set params_file or pass --params");
    CalibratedParams cal = load_calibrated_params(params_path);
    RunResult res = run_scenario(sc, cal);
    std::map<std::string, std::string> files{{"events.csv", res.events_csv},
                                             {"controller_log.csv", res.controller_csv},
                                             {"keystore_audit.csv", res.audit_csv},
                                             {"summary.csv", res.summary_csv}};
    for (const auto& path : emit_report(files, out_dir))
        std::printf("wrote %s\n", path.c_str());
    return 0;
}

int cmd_validate(const std::string& topo_path) {
    Topology topo = parse_topology_json(nlohmann::json::parse(read_text_file(topo_path)));
    auto violations = validate(topo);
    bool bad = false;
    for (const auto& v : violations) {
        bool is_err = v.severity == Violation::Severity::Error;
        bad = bad || is_err;
        std::printf("%s %s: %s\n", is_err ? "error " : "warning", v.element.c_str(),
                    v.message.c_str());
    }
    if (violations.empty()) std::printf("ok: %zu nodes, %zu spans\n", topo.nodes.size(),
                                        topo.spans.size());
    return bad ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic simulator for a switched, trusted-node-free DV-QKD metro "
                 "network with quantum/classical coexistence models"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "Run a scenario and write its logs");
    std::string scenario_path, run_out = "out", run_params;
    std::uint64_t seed = 0;
    run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    auto* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--out", run_out, "Output directory");
    run->add_option("--params", run_params, "Calibrated params file (overrides scenario)");

    // calibrate
    auto* calib = app.add_subcommand("calibrate", "Fit model parameters from measurements");
    std::string table_path, anchors_path, calib_out = "calibrated_params.json";
    calib->add_option("--table3", table_path, "Link table CSV")->required();
    calib->add_option("--anchors", anchors_path, "Anchors JSON")->required();
    calib->add_option("--out", calib_out, "Output params file");

    // preset
    auto* preset = app.add_subcommand("preset", "Evaluate a bundled experiment preset");
    std::string preset_name, preset_params, preset_out = "out";
    preset->add_option("name", preset_name, "table3|fig4a|fig4b|fig4cd|fig5")->required();
    preset->add_option("--params", preset_params, "Calibrated params file")->required();
    preset->add_option("--out", preset_out, "Output directory");

    // topology validate
    auto* topo = app.add_subcommand("topology", "Topology utilities");
    auto* tval = topo->add_subcommand("validate", "Check a topology file");
    std::string topo_path;
    tval->add_option("file", topo_path, "Topology JSON file")->required();
    topo->require_subcommand(1);

    try {
        app.parse(argc, argv);
        if (*run) return cmd_run(scenario_path, seed, seed_opt->count() > 0, run_params, run_out);
        if (*calib) return cmd_calibrate(table_path, anchors_path, calib_out);
        if (*preset) return cmd_preset(preset_name, preset_params, preset_out);
        if (*tval) return cmd_validate(topo_path);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
