#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "qkdnet/errors.hpp"
#include "qkdnet/topology.hpp"
#include "qkdnet/units.hpp"

namespace qkdnet {

struct ClassicalChannel {
    double freq_thz = 0.0;
    double launch_power_dbm = 0.0;
};

struct ChannelPlan {
    double quantum_freq_thz = 193.20;
    double grid_spacing_ghz = 50.0;
    std::vector<ClassicalChannel> classical;

    double aggregate_launch_mw() const {
        double p = 0.0;
        for (const auto& c : classical) p += dbm_to_mw(c.launch_power_dbm);
        return p;
    }
};

struct FilterSpec {
    double center_freq_thz = 193.20;
    double bandwidth_ghz = 100.0;
    double pass_loss_db = 0.5;
    double rejection_db = 40.0;
};

struct RamanParams {
    /// Scattered fraction of launch power per effective km per GHz of the
    /// receiver filter band (linear scale). Calibrated, not taken from data
    /// sheets.
    double rho = 0.0;
    /// Distributed attenuation used for the effective-length integral;
    /// measured span losses also contain lumped connector loss, which does
    /// not contribute interaction length.
    double alpha_db_per_km = 0.2;
};

/// Length over which nonlinear generation effectively accumulates in a lossy
/// fibre: (1 - 10^(-alpha L / 10)) / (alpha ln10 / 10). Equals L as alpha -> 0
/// and saturates at 10/(alpha ln10) for long spans.
inline double effective_length_km(double alpha_db_per_km, double length_km) {
    if (alpha_db_per_km < 0 || length_km < 0)
        throw ValidationError("effective_length: negative input");
    double a = alpha_db_per_km * std::log(10.0) / 10.0; // 1/km
    double al = a * length_km;
    if (al < 1e-12) return length_km;
    return (1.0 - std::exp(-al)) / a;
}

inline double photon_rate_from_power(double power_dbm, double wavelength_nm) {
    if (wavelength_nm <= 0) throw ValidationError("photon_rate: wavelength must be > 0");
    double watts = std::pow(10.0, (power_dbm - 30.0) / 10.0);
    return watts / photon_energy_j_from_nm(wavelength_nm);
}

inline double photon_rate_from_mw(double power_mw, double freq_thz) {
    return power_mw * 1e-3 / (kPlanckJs * freq_thz * 1e12);
}

/// Per-span geometry of a path, in propagation order from the sender, with
/// the number of cross-connections the light still passes after leaving the
/// span. This is the view the physics works on, detached from any particular
/// Topology: lab routes cross an OXC at every node, field links may not.
struct SpanGeom {
    double length_km = 0.0;
    double loss_db = 0.0;
    int oxc_after = 0;
};

struct RouteGeometry {
    std::vector<SpanGeom> spans;
    int n_cross_connects = 0;
    double budget_db = 0.0; // full end-to-end loss, terminal insertion included
    double oxc_db = 1.0;
};

inline RouteGeometry route_geometry(const Topology& topo, const Route& route) {
    RouteGeometry g;
    const int m = static_cast<int>(route.spans.size());
    for (int i = 0; i < m; ++i) {
        const FibreSpan& s = topo.span(route.spans[i]);
        g.spans.push_back({s.length_km, s.loss_db(), m - i});
    }
    g.n_cross_connects = route.n_cross_connects();
    g.budget_db = route_loss_db(topo, route);
    if (!route.nodes.empty()) g.oxc_db = topo.node(route.nodes.front()).oxc_loss_db;
    return g;
}

namespace detail {

/// Sum over spans of effective length weighted by the linear attenuation from
/// the span's far end to the receiver (remaining spans plus the exit-side
/// cross-connections). Terminal insertion is common to every route end and is
/// absorbed by the calibrated coefficients instead.
inline double generation_weight_km(const RouteGeometry& g, double alpha_db_per_km) {
    double w = 0.0;
    const std::size_t m = g.spans.size();
    for (std::size_t i = 0; i < m; ++i) {
        double post_db = g.spans[i].oxc_after * g.oxc_db;
        for (std::size_t j = i + 1; j < m; ++j) post_db += g.spans[j].loss_db;
        w += effective_length_km(alpha_db_per_km, g.spans[i].length_km) * db_to_linear(-post_db);
    }
    return w;
}

} // namespace detail

/// Spontaneous-Raman noise photons per second arriving at the receiver inside
/// the filter band. Linear in every channel's launch power and in the filter
/// bandwidth by construction.
inline double raman_noise_photon_rate(const ChannelPlan& plan, const RouteGeometry& route,
                                      const FilterSpec& filter, const RamanParams& params) {
    if (params.rho < 0) throw UncalibratedError("raman rho not calibrated");
    if (plan.classical.empty()) return 0.0;
    double w = detail::generation_weight_km(route, params.alpha_db_per_km);
    double scattered_mw =
        plan.aggregate_launch_mw() * params.rho * w * filter.bandwidth_ghz;
    return photon_rate_from_mw(scattered_mw, plan.quantum_freq_thz);
}

struct FwmProduct {
    double product_freq_thz = 0.0;
    std::vector<std::array<int, 3>> triples; // (i, j, k) with i <= j
    bool quantum_collision = false;
};

/// Every f_i + f_j - f_k over ordered triples (i <= j canonical, degenerate
/// i == j included), grouped by product frequency. A product within the
/// collision window of the quantum channel is flagged.
inline std::vector<FwmProduct> fwm_products(const std::vector<double>& freqs,
                                            double quantum_freq_thz,
                                            double window_ghz = 25.0) {
    std::vector<FwmProduct> out;
    const int n = static_cast<int>(freqs.size());
    const double tol = 1e-6; // THz grouping tolerance
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                double p = freqs[i] + freqs[j] - freqs[k];
                FwmProduct* slot = nullptr;
                for (auto& e : out)
                    if (std::fabs(e.product_freq_thz - p) <= tol) {
                        slot = &e;
                        break;
                    }
                if (!slot) {
                    out.push_back({p, {}, false});
                    slot = &out.back();
                }
                slot->triples.push_back({i, j, k});
                if (std::fabs(p - quantum_freq_thz) * 1000.0 <= window_ghz + 1e-9)
                    slot->quantum_collision = true;
            }
    std::sort(out.begin(), out.end(), [](const FwmProduct& a, const FwmProduct& b) {
        return a.product_freq_thz < b.product_freq_thz;
    });
    return out;
}

/// Sum of P_i * P_j * P_k (mW^3) over the triples whose mixing product lands
/// on the quantum channel. Zero when no product collides.
inline double fwm_colliding_cube_mw3(const ChannelPlan& plan, double window_ghz = 25.0) {
    std::vector<double> freqs;
    freqs.reserve(plan.classical.size());
    for (const auto& c : plan.classical) freqs.push_back(c.freq_thz);
    if (freqs.size() < 1) return 0.0;
    double cube = 0.0;
    for (const auto& prod : fwm_products(freqs, plan.quantum_freq_thz, window_ghz)) {
        if (!prod.quantum_collision) continue;
        for (const auto& t : prod.triples)
            cube += dbm_to_mw(plan.classical[t[0]].launch_power_dbm) *
                    dbm_to_mw(plan.classical[t[1]].launch_power_dbm) *
                    dbm_to_mw(plan.classical[t[2]].launch_power_dbm);
    }
    return cube;
}

/// Band-edge leakage model for a tunable pass filter sitting above the
/// quantum channel: once the lower passband edge gets within roll-off range
/// of the quantum acceptance window, broadband classical noise floods in.
struct FilterLeakParams {
    double coeff = 0.0;             // photons/s per mW reaching the receiver, at zero gap
    double rolloff_db_per_ghz = 0.8;
    double quantum_window_ghz = 100.0; // receiver acceptance window around the quantum line
};

inline double filter_edge_gap_ghz(const FilterSpec& external, double quantum_freq_thz,
                                  double quantum_window_ghz) {
    double edge_thz = external.center_freq_thz - external.bandwidth_ghz / 2000.0;
    double window_top_thz = quantum_freq_thz + quantum_window_ghz / 2000.0;
    return (edge_thz - window_top_thz) * 1000.0;
}

inline double filter_leak_photon_rate(const ChannelPlan& plan, const RouteGeometry& route,
                                      const FilterSpec& external, const FilterLeakParams& leak) {
    if (plan.classical.empty() || leak.coeff <= 0.0) return 0.0;
    // Only channels the filter actually passes can leak noise toward the
    // quantum window; channels on the reject side contribute nothing.
    double in_band_mw = 0.0;
    for (const auto& c : plan.classical)
        if (std::fabs(c.freq_thz - external.center_freq_thz) * 1000.0 <=
            external.bandwidth_ghz / 2.0 + 1e-9)
            in_band_mw += dbm_to_mw(c.launch_power_dbm);
    if (in_band_mw <= 0.0) return 0.0;
    double gap = filter_edge_gap_ghz(external, plan.quantum_freq_thz, leak.quantum_window_ghz);
    double suppression = db_to_linear(-leak.rolloff_db_per_ghz * std::max(0.0, gap));
    double path_db = route.n_cross_connects * route.oxc_db;
    for (const auto& s : route.spans) path_db += s.loss_db;
    return leak.coeff * in_band_mw * db_to_linear(-path_db) * suppression;
}

struct ClassicalPathParams {
    double tx_insertion_db = 6.0; // combiner at the transponder output
    double rx_insertion_db = 6.0; // splitter feeding the coherent receivers
    double edfa_gain_db = 15.0;
    bool edfa_present = true;
};

struct ChannelFeasibility {
    double freq_thz = 0.0;
    double received_dbm = 0.0;
    bool feasible = false;
};

/// Received power per classical channel against the detector sensitivity.
/// Classical light takes the spans and cross-connections but not the quantum
/// terminal couplers.
inline std::vector<ChannelFeasibility> classical_feasibility(
    const ChannelPlan& plan, const RouteGeometry& route, double sensitivity_dbm,
    const ClassicalPathParams& path = {}) {
    double loss = path.tx_insertion_db + path.rx_insertion_db +
                  route.n_cross_connects * route.oxc_db;
    for (const auto& s : route.spans) loss += s.loss_db;
    double gain = path.edfa_present ? path.edfa_gain_db : 0.0;
    std::vector<ChannelFeasibility> out;
    out.reserve(plan.classical.size());
    for (const auto& c : plan.classical) {
        double rx = c.launch_power_dbm - loss + gain;
        out.push_back({c.freq_thz, rx, rx >= sensitivity_dbm});
    }
    return out;
}

} // namespace qkdnet
