#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdnet/calibration.hpp"
#include "qkdnet/controller.hpp"
#include "qkdnet/topology.hpp"

namespace qkdnet {

struct RequestSpec {
    double time_s = 0.0;
    ConnectionRequest request;
};

struct FaultSpec {
    double time_s = 0.0;
    std::string kind; // forced_qber | span_down | span_up
    std::string span;
    double qber_pct = 0.0;
};

struct Scenario {
    Topology topology;
    std::string params_file;
    double duration_s = 0.0;
    std::uint64_t seed = 0;
    double rekey_interval_s = 60.0;
    double observation_sigma_rel = 0.05;
    int max_hops = 3;
    std::vector<RequestSpec> requests;
    std::vector<FaultSpec> faults;
};

inline ChannelPlan parse_plan_json(const nlohmann::json& j) {
    ChannelPlan p;
    p.quantum_freq_thz = j.value("quantum_freq_thz", 193.20);
    p.grid_spacing_ghz = j.value("grid_spacing_ghz", 50.0);
    for (const auto& jc : j.value("channels", nlohmann::json::array()))
        p.classical.push_back(
            {jc.at("freq_thz").get<double>(), jc.at("launch_power_dbm").get<double>()});
    return p;
}

inline Scenario parse_scenario_json(const nlohmann::json& j, const std::string& base_dir) {
    Scenario sc;
    try {
        if (j.contains("topology"))
            sc.topology = parse_topology_json(j.at("topology"));
        else if (j.contains("topology_file")) {
            std::filesystem::path p = j.at("topology_file").get<std::string>();
            if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
            sc.topology = load_topology(read_text_file(p.string()));
        } else {
            throw ParseError("scenario needs 'topology' or 'topology_file'");
        }
        if (j.contains("params_file")) {
            std::filesystem::path p = j.at("params_file").get<std::string>();
            if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
            sc.params_file = p.string();
        }
        sc.duration_s = j.at("duration_s").get<double>();
        sc.seed = j.value("seed", 0ull);
        sc.rekey_interval_s = j.value("rekey_interval_s", 60.0);
        sc.observation_sigma_rel = j.value("observation_sigma_rel", 0.05);
        sc.max_hops = j.value("max_hops", 3);
        for (const auto& jr : j.value("requests", nlohmann::json::array())) {
            RequestSpec r;
            r.time_s = jr.at("time_s").get<double>();
            r.request.src = jr.at("src").get<std::string>();
            r.request.dst = jr.at("dst").get<std::string>();
            r.request.kind = conn_kind_from_string(jr.value("kind", "quantum_secured"));
            if (jr.contains("plan")) r.request.plan = parse_plan_json(jr.at("plan"));
            sc.requests.push_back(std::move(r));
        }
        for (const auto& jf : j.value("faults", nlohmann::json::array())) {
            FaultSpec f;
            f.time_s = jf.at("time_s").get<double>();
            f.kind = jf.at("kind").get<std::string>();
            f.span = jf.value("span", std::string());
            f.qber_pct = jf.value("qber_pct", 0.0);
            if (f.kind != "forced_qber" && f.kind != "span_down" && f.kind != "span_up")
                throw ParseError("unknown fault kind '" + f.kind + "'");
            sc.faults.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scenario schema: ") + e.what());
    }

    if (sc.duration_s <= 0) throw ScheduleError("duration_s must be > 0");
    auto check_sorted = [&](auto& items, const char* what) {
        double last = 0.0;
        for (const auto& it : items) {
            if (it.time_s < 0) throw ScheduleError(std::string(what) + " scheduled before t=0");
            if (it.time_s < last) throw ScheduleError(std::string(what) + " schedule not sorted");
            if (it.time_s > sc.duration_s)
                throw ScheduleError(std::string(what) + " scheduled after the scenario ends");
            last = it.time_s;
        }
    };
    check_sorted(sc.requests, "request");
    check_sorted(sc.faults, "fault");
    return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scenario JSON: ") + e.what());
    }
    return parse_scenario_json(j, std::filesystem::path(path).parent_path().string());
}

} // namespace qkdnet
