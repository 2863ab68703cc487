#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "qkdnet/channel.hpp"
#include "qkdnet/errors.hpp"
#include "qkdnet/rng.hpp"
#include "qkdnet/units.hpp"

namespace qkdnet {

/// Phenomenological device model for one terminal pair. The loss coefficient
/// carries detector dark-count growth with attenuation; the rate exponent is
/// fitted rather than derived because the vendor's distillation stack is
/// opaque.
struct QkdDeviceParams {
    double base_qber_pct = 0.0;        // intrinsic optical error floor
    double qber_loss_coeff = 0.0;      // % per unit inverse transmittance
    double skr_ref_bps = 0.0;          // rate at the reference budget
    double skr_loss_exponent = 1.0;    // >= 1
    double skr_ref_loss_db = 4.99;
    double ec_efficiency = 1.16;       // error-correction inefficiency f_EC
    double noise_qber_coeff = 0.0;     // % per (photon/s at detector) per inverse transmittance
    double qber_abort_threshold_pct = 6.0;
    double max_budget_db = 10.0;

    bool calibrated() const { return skr_ref_bps > 0.0; }
};

/// Binary entropy of p, exact at the endpoints and at p = 1/2.
inline double binary_entropy(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Distillable fraction after error correction and privacy amplification.
inline double distillable_fraction(double qber_fraction, double ec_efficiency) {
    return std::max(0.0, 1.0 - (1.0 + ec_efficiency) * binary_entropy(qber_fraction));
}

/// QBER in percent: intrinsic error plus a dark-count term growing with
/// inverse transmittance plus noise clicks competing against the attenuated
/// signal. Clamped to the random-click limit of 50 %.
inline double qber_estimate(double route_loss_db, double noise_rate,
                            const QkdDeviceParams& p) {
    double inv_t = db_to_linear(route_loss_db);
    double q = p.base_qber_pct + p.qber_loss_coeff * inv_t +
               p.noise_qber_coeff * noise_rate * inv_t;
    return std::clamp(q, 0.0, 50.0);
}

/// Secret key rate in bps. Hard abort (exactly zero) at the QBER threshold or
/// past the device power budget; otherwise a fitted power law in transmittance
/// scaled by the distillable fraction relative to the reference point.
inline double skr_estimate(double route_loss_db, double qber_pct, const QkdDeviceParams& p) {
    if (!p.calibrated()) throw UncalibratedError("skr_estimate: device not calibrated");
    if (qber_pct >= p.qber_abort_threshold_pct) return 0.0;
    if (route_loss_db > p.max_budget_db) return 0.0;
    if (std::isinf(route_loss_db)) return 0.0;
    double q_ref = qber_estimate(p.skr_ref_loss_db, 0.0, p);
    double norm = distillable_fraction(q_ref / 100.0, p.ec_efficiency);
    if (norm <= 0.0) return 0.0;
    double scale = std::pow(10.0, -p.skr_loss_exponent * (route_loss_db - p.skr_ref_loss_db) / 10.0);
    return p.skr_ref_bps * scale * distillable_fraction(qber_pct / 100.0, p.ec_efficiency) / norm;
}

struct QkdLinkEstimate {
    double qber_pct = 0.0;
    double skr_bps = 0.0;
    double signal_rate = 0.0; // clicks/s, nominal detector model
    double dark_rate = 0.0;
    double noise_rate = 0.0;  // noise photons/s at the detector
    bool aborted = false;
};

/// Everything the physics pipeline needs once calibration has run.
struct PhysicsParams {
    QkdDeviceParams device;
    RamanParams raman;
    double fwm_noise_coeff = 0.0;      // photons/s per mW^3 per weighted km
    double fwm_window_ghz = 25.0;
    FilterLeakParams leak;
    double quantum_freq_thz = 193.20;
    double internal_filter_bandwidth_ghz = 100.0;

    FilterSpec receiver_filter() const {
        return FilterSpec{quantum_freq_thz, internal_filter_bandwidth_ghz, 0.5, 40.0};
    }
};

// Nominal detected-signal rate at zero loss, used only for the diagnostic
// click-rate fields of an estimate.
inline constexpr double kNominalSourceClickRate = 2.5e5;

/// Full chain: route loss -> in-band noise (Raman + mixing products landing on
/// the quantum channel + optional external-filter leakage) -> QBER -> SKR.
inline QkdLinkEstimate estimate_link(const RouteGeometry& route, const ChannelPlan& plan,
                                     const FilterSpec& receiver_filter,
                                     const PhysicsParams& params,
                                     const std::optional<FilterSpec>& external_filter = {}) {
    if (!params.device.calibrated()) throw UncalibratedError("estimate_link: not calibrated");

    double noise = raman_noise_photon_rate(plan, route, receiver_filter, params.raman);
    double cube = fwm_colliding_cube_mw3(plan, params.fwm_window_ghz);
    if (cube > 0.0 && params.fwm_noise_coeff > 0.0)
        noise += params.fwm_noise_coeff * cube *
                 detail::generation_weight_km(route, params.raman.alpha_db_per_km);
    if (external_filter)
        noise += filter_leak_photon_rate(plan, route, *external_filter, params.leak);

    QkdLinkEstimate est;
    est.noise_rate = noise;
    est.qber_pct = qber_estimate(route.budget_db, noise, params.device);
    est.skr_bps = skr_estimate(route.budget_db, est.qber_pct, params.device);
    est.aborted = est.qber_pct >= params.device.qber_abort_threshold_pct ||
                  route.budget_db > params.device.max_budget_db;
    if (est.aborted) est.skr_bps = 0.0;

    est.signal_rate = kNominalSourceClickRate * db_to_linear(-route.budget_db);
    est.dark_rate = 2.0 * kNominalSourceClickRate * params.device.qber_loss_coeff / 100.0;
    return est;
}

inline QkdLinkEstimate estimate_link(const Topology& topo, const Route& route,
                                     const ChannelPlan& plan, const FilterSpec& receiver_filter,
                                     const PhysicsParams& params,
                                     const std::optional<FilterSpec>& external_filter = {}) {
    return estimate_link(route_geometry(topo, route), plan, receiver_filter, params,
                         external_filter);
}

struct Observation {
    double qber_pct = 0.0;
    double skr_bps = 0.0;
};

/// Monitoring sample: multiplicative Gaussian jitter on both values,
/// deterministic for a given generator state. Aborted links always read at or
/// above the threshold with zero rate.
inline Observation sample_observation(const QkdLinkEstimate& est, Rng& rng,
                                      double sigma_rel = 0.05,
                                      double abort_threshold_pct = 6.0) {
    double q = est.qber_pct * (1.0 + sigma_rel * rng.gaussian());
    double s = est.skr_bps * (1.0 + sigma_rel * rng.gaussian());
    q = std::clamp(q, 0.0, 50.0);
    s = std::max(0.0, s);
    if (est.aborted) {
        q = std::max(q, abort_threshold_pct);
        s = 0.0;
    }
    return {q, s};
}

} // namespace qkdnet
