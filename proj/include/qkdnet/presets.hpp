#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "qkdnet/calibration.hpp"
#include "qkdnet/csv.hpp"

namespace qkdnet {

struct SweepPoint {
    double independent = 0.0;
    double qber_pct = 0.0;
    double skr_bps = 0.0;
    bool aborted = false;
    bool classical_feasible = true;
};

struct SweepResult {
    std::string name;
    std::string independent_label; // launch_power_dbm | bandwidth_ghz
    std::vector<SweepPoint> points;
};

inline constexpr double kSweepSensitivityDbm = -35.0;

/// Steady-state estimates for every calibrated link row with no classical
/// channels: the coexistence-free baseline table.
inline std::string preset_link_table(const CalibratedParams& cal) {
    CsvWriter csv({"link", "budget_db", "qber_pct", "skr_bps"});
    ChannelPlan quiet;
    quiet.quantum_freq_thz = cal.physics.quantum_freq_thz;
    for (const auto& row : cal.rows) {
        QkdLinkEstimate est = cal.estimate(row.link, quiet);
        RouteGeometry g = cal.link_geometry(row.link);
        csv.write_row({row.link, num_str_fixed(g.budget_db, 4), num_str_fixed(est.qber_pct, 4),
                       num_str_fixed(est.skr_bps, 2)});
    }
    return csv.str();
}

/// Launch-power sweep for n classical channels on the grid next to the
/// quantum channel, over one measured link.
inline SweepResult preset_power_sweep(const CalibratedParams& cal, const std::string& link,
                                      int n_channels, double power_min_dbm = -2.0,
                                      double power_max_dbm = 9.0, double step_dbm = 1.0) {
    SweepResult res;
    res.name = link + "_" + std::to_string(n_channels) + "ch";
    res.independent_label = "launch_power_dbm";
    RouteGeometry g = cal.link_geometry(link);
    for (double p = power_min_dbm; p <= power_max_dbm + 1e-9; p += step_dbm) {
        ChannelPlan plan = cal.lab_plan(n_channels, p);
        QkdLinkEstimate est = cal.estimate(link, plan);
        auto feas = classical_feasibility(plan, g, kSweepSensitivityDbm);
        bool all_ok = true;
        for (const auto& f : feas) all_ok = all_ok && f.feasible;
        res.points.push_back({p, est.qber_pct, est.skr_bps, est.aborted, all_ok});
    }
    return res;
}

/// Receiver-filter bandwidth sweep over a field-deployed link carrying six
/// classical channels.
inline SweepResult preset_filter_sweep(const CalibratedParams& cal, const std::string& field_link,
                                       double bw_min_ghz = 500.0, double bw_max_ghz = 800.0,
                                       double step_ghz = 25.0) {
    SweepResult res;
    res.name = field_link;
    res.independent_label = "bandwidth_ghz";
    RouteGeometry g = cal.field_geometry(field_link);
    ChannelPlan plan = cal.field_trial_plan();
    for (double bw = bw_min_ghz; bw <= bw_max_ghz + 1e-9; bw += step_ghz) {
        QkdLinkEstimate est = cal.estimate(field_link, plan, cal.external_filter(bw));
        auto feas = classical_feasibility(plan, g, kSweepSensitivityDbm);
        bool all_ok = true;
        for (const auto& f : feas) all_ok = all_ok && f.feasible;
        res.points.push_back({bw, est.qber_pct, est.skr_bps, est.aborted, all_ok});
    }
    return res;
}

inline std::string sweep_csv(const SweepResult& res) {
    CsvWriter csv({res.independent_label, "qber_pct", "skr_bps", "aborted",
                   "classical_feasible"});
    for (const auto& p : res.points)
        csv.write_row({num_str(p.independent), num_str_fixed(p.qber_pct, 4),
                       num_str_fixed(p.skr_bps, 2), p.aborted ? "1" : "0",
                       p.classical_feasible ? "1" : "0"});
    return csv.str();
}

/// Named preset bundles: file name -> CSV content. Names are the stable CLI
/// preset identifiers.
inline std::map<std::string, std::string> build_preset(const CalibratedParams& cal,
                                                       const std::string& preset) {
    std::map<std::string, std::string> files;
    auto add_sweep = [&](const std::string& fname, const SweepResult& r) {
        files[fname] = sweep_csv(r);
    };
    if (preset == "table3") {
        files["table3.csv"] = preset_link_table(cal);
    } else if (preset == "fig4a") {
        for (const std::string link : {"L1", "L2", "L3", "L4"})
            add_sweep("fig4a_" + link + ".csv", preset_power_sweep(cal, link, 1));
    } else if (preset == "fig4b") {
        for (const std::string link : {"L1", "L2", "L3", "L4"})
            add_sweep("fig4b_" + link + ".csv", preset_power_sweep(cal, link, 4));
    } else if (preset == "fig4cd") {
        add_sweep("fig4c.csv", preset_power_sweep(cal, "L1+L2", 4));
        add_sweep("fig4d.csv", preset_power_sweep(cal, "L1+L3", 4));
    } else if (preset == "fig5") {
        add_sweep("fig5a.csv", preset_filter_sweep(cal, "HPN-WTC"));
        add_sweep("fig5b.csv", preset_filter_sweep(cal, "NSQI-WTC"));
    } else {
        throw ValidationError("unknown preset '" + preset + "'");
    }

    CsvWriter sum({"file", "rows"});
    for (const auto& [name, content] : files) {
        long long lines = -1; // exclude header
        for (char c : content)
            if (c == '\n') ++lines;
        sum.write_row({name, num_str(lines)});
    }
    files["summary.csv"] = sum.str();
    return files;
}

/// Writes one file per entry under out_dir; identical inputs yield identical
/// bytes.
inline std::vector<std::string> emit_report(const std::map<std::string, std::string>& files,
                                            const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
    std::vector<std::string> written;
    for (const auto& [name, content] : files) {
        fs::path p = fs::path(out_dir) / name;
        write_text_file(p.string(), content);
        written.push_back(p.string());
    }
    return written;
}

} // namespace qkdnet
