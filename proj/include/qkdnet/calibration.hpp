#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdnet/csv.hpp"
#include "qkdnet/loss_fit.hpp"
#include "qkdnet/qkd.hpp"

namespace qkdnet {

/// One row of the measured link table: the calibration input, mirrored as CSV
/// with columns link,length_km,budget_db,n_oxc,qber_pct,skr_bps.
struct LinkRow {
    std::string link;
    std::vector<std::string> span_ids; // derived from the link name
    double length_km = 0.0;
    double budget_db = 0.0;
    int n_oxc = 0;
    double qber_pct = 0.0;
    double skr_bps = 0.0;

    // filled by calibration
    double fit_budget_db = 0.0;
    double fit_qber_pct = 0.0;
    double fit_skr_bps = 0.0;

    MeasuredBudget measured() const { return {link, span_ids, n_oxc, budget_db}; }
};

/// Composite links are named "La+Lb" and traverse those spans in name order;
/// the loopback row gets its own zero-length patch span.
inline std::vector<std::string> spans_from_link_name(const std::string& link) {
    if (link == "Back-to-Back") return {"B2B"};
    std::vector<std::string> out;
    for (const auto& part : split(link, '+')) {
        if (part.empty()) throw ParseError("bad link name '" + link + "'");
        out.push_back(part);
    }
    return out;
}

inline std::vector<LinkRow> parse_link_table_csv(const std::string& text) {
    CsvTable t = parse_csv(text);
    int c_link = t.column("link"), c_len = t.column("length_km"), c_bud = t.column("budget_db");
    int c_oxc = t.column("n_oxc"), c_q = t.column("qber_pct"), c_s = t.column("skr_bps");
    std::vector<LinkRow> rows;
    for (const auto& r : t.rows) {
        LinkRow row;
        row.link = r[c_link];
        row.span_ids = spans_from_link_name(row.link);
        row.length_km = to_double(r[c_len]);
        row.budget_db = to_double(r[c_bud]);
        row.n_oxc = static_cast<int>(to_int(r[c_oxc]));
        row.qber_pct = to_double(r[c_q]);
        row.skr_bps = to_double(r[c_s]);
        rows.push_back(std::move(row));
    }
    return rows;
}

struct FieldLink {
    std::string name;
    double length_km = 0.0;
    double fibre_loss_db = 0.0;
    int extra_cross_connects = 0;
};

struct CoexistenceAnchor {
    enum class Kind { NoAbort, Abort, SkrDrop };
    Kind kind = Kind::NoAbort;
    std::string link;
    int n_channels = 1;
    double launch_power_dbm = 0.0;
    double min_skr_bps = 0.0;       // NoAbort
    double max_drop_fraction = 0.0; // SkrDrop
};

struct FieldPlanSpec {
    double first_freq_thz = 193.50;
    double spacing_ghz = 50.0;
    int count = 6;
    double launch_power_dbm = 0.0;
};

struct FilterSweepSpec {
    std::string link;
    FieldPlanSpec plan;
    double filter_center_thz = 193.625;
    double ok_bw_min_ghz = 500.0;
    double ok_bw_max_ghz = 725.0;
    double ok_min_skr_bps = 890.0;
    double ok_max_qber_pct = 2.8;
    double abort_bw_ghz = 750.0;
    double abort_min_qber_pct = 5.9;
};

struct AnchorSet {
    double quantum_freq_thz = 193.20;
    double lab_first_freq_thz = 193.35;
    double grid_spacing_ghz = 50.0;
    std::vector<CoexistenceAnchor> coexistence;
    std::vector<FieldLink> field_links;
    std::optional<FilterSweepSpec> filter_sweep;
};

inline AnchorSet parse_anchors_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("anchors JSON: ") + e.what());
    }
    AnchorSet a;
    try {
        a.quantum_freq_thz = j.value("quantum_freq_thz", 193.20);
        if (j.contains("classical_grid")) {
            a.lab_first_freq_thz = j["classical_grid"].value("first_freq_thz", 193.35);
            a.grid_spacing_ghz = j["classical_grid"].value("spacing_ghz", 50.0);
        }
        for (const auto& jc : j.value("coexistence", nlohmann::json::array())) {
            CoexistenceAnchor c;
            std::string type = jc.at("type").get<std::string>();
            if (type == "no_abort")
                c.kind = CoexistenceAnchor::Kind::NoAbort;
            else if (type == "abort")
                c.kind = CoexistenceAnchor::Kind::Abort;
            else if (type == "skr_drop")
                c.kind = CoexistenceAnchor::Kind::SkrDrop;
            else
                throw ParseError("unknown coexistence anchor type '" + type + "'");
            c.link = jc.at("link").get<std::string>();
            c.n_channels = jc.at("n_channels").get<int>();
            c.launch_power_dbm = jc.at("launch_power_dbm").get<double>();
            c.min_skr_bps = jc.value("min_skr_bps", 0.0);
            c.max_drop_fraction = jc.value("max_drop_fraction", 0.0);
            a.coexistence.push_back(c);
        }
        for (const auto& jf : j.value("field_links", nlohmann::json::array())) {
            FieldLink f;
            f.name = jf.at("name").get<std::string>();
            f.length_km = jf.at("length_km").get<double>();
            f.fibre_loss_db = jf.at("fibre_loss_db").get<double>();
            f.extra_cross_connects = jf.value("extra_cross_connects", 0);
            a.field_links.push_back(f);
        }
        if (j.contains("filter_sweep")) {
            const auto& js = j["filter_sweep"];
            FilterSweepSpec s;
            s.link = js.at("link").get<std::string>();
            const auto& jp = js.at("channels");
            s.plan.first_freq_thz = jp.at("first_freq_thz").get<double>();
            s.plan.spacing_ghz = jp.value("spacing_ghz", 50.0);
            s.plan.count = jp.at("count").get<int>();
            s.plan.launch_power_dbm = jp.value("launch_power_dbm", 0.0);
            s.filter_center_thz = js.value("filter_center_thz", 193.625);
            const auto& jok = js.at("ok");
            s.ok_bw_min_ghz = jok.at("bandwidth_ghz_min").get<double>();
            s.ok_bw_max_ghz = jok.at("bandwidth_ghz_max").get<double>();
            s.ok_min_skr_bps = jok.at("min_skr_bps").get<double>();
            s.ok_max_qber_pct = jok.at("max_qber_pct").get<double>();
            const auto& jab = js.at("abort");
            s.abort_bw_ghz = jab.at("bandwidth_ghz").get<double>();
            s.abort_min_qber_pct = jab.at("min_qber_pct").get<double>();
            a.filter_sweep = s;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("anchors schema: ") + e.what());
    }
    return a;
}

struct ResidualReport {
    double budget_max_abs_db = 0.0;
    double qber_max_abs_pp = 0.0;
    double skr_rms_rel = 0.0;
    double skr_max_rel = 0.0;
};

struct CalibrationConfig {
    double oxc_db = 1.0;
    double rho = 2.0e-9;            // pinned physical scale; the QBER coefficient carries the fit
    double alpha_db_per_km = 0.2;
    double internal_filter_bandwidth_ghz = 100.0;
    double fwm_window_ghz = 25.0;
    double leak_rolloff_db_per_ghz = 0.8;
    std::vector<double> raman_fill_ladder{0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
    double fwm_margin_pp = 0.5;  // how far past the threshold abort anchors are placed
    double leak_margin_pp = 1.0;
    // residual bounds; calibration fails if exceeded
    double budget_tol_db = 0.3;
    double qber_tol_pp = 0.4;
    double skr_rms_tol = 0.25;
    double skr_max_tol = 0.40;
};

/// Calibration output: the full physics parameter set plus the fitted loss
/// decomposition, the per-row fit, and enough plan/geometry context to
/// re-evaluate every preset without the original inputs.
struct CalibratedParams {
    PhysicsParams physics;
    LossDecomposition decomposition;
    std::vector<LinkRow> rows;
    ResidualReport residuals;
    std::vector<FieldLink> field_links;
    double lab_first_freq_thz = 193.35;
    double grid_spacing_ghz = 50.0;
    FieldPlanSpec field_plan;
    double filter_center_thz = 193.625;

    const LinkRow& row(const std::string& link) const {
        for (const auto& r : rows)
            if (r.link == link) return r;
        throw ValidationError("no calibration row for link '" + link + "'");
    }

    const FieldLink& field_link(const std::string& name) const {
        for (const auto& f : field_links)
            if (f.name == name) return f;
        throw ValidationError("no field link '" + name + "'");
    }

    bool has_field_link(const std::string& name) const {
        for (const auto& f : field_links)
            if (f.name == name) return true;
        return false;
    }

    /// Geometry of a measured lab link: spans in name order, one exit-side
    /// cross-connection per remaining node, fitted budget.
    RouteGeometry link_geometry(const std::string& link) const {
        const LinkRow& r = row(link);
        RouteGeometry g;
        const int m = static_cast<int>(r.span_ids.size());
        for (int i = 0; i < m; ++i) {
            const std::string& sid = r.span_ids[i];
            auto it = decomposition.span_loss_db.find(sid);
            if (it == decomposition.span_loss_db.end())
                throw ValidationError("no fitted loss for span '" + sid + "'");
            double len = 0.0;
            for (const auto& rr : rows)
                if (rr.span_ids.size() == 1 && rr.span_ids[0] == sid) len = rr.length_km;
            g.spans.push_back({len, it->second, m - i});
        }
        g.n_cross_connects = r.n_oxc;
        g.oxc_db = decomposition.oxc_db;
        g.budget_db = decomposition.reconstruct(r.measured());
        return g;
    }

    /// Geometry of a field-trial link: the fibre plus any mid-path
    /// cross-connections; no lab terminal couplers on these paths.
    RouteGeometry field_geometry(const std::string& name) const {
        const FieldLink& f = field_link(name);
        RouteGeometry g;
        int hops = f.extra_cross_connects + 1;
        for (int i = 0; i < hops; ++i)
            g.spans.push_back({f.length_km / hops, f.fibre_loss_db / hops,
                               f.extra_cross_connects - i > 0 ? f.extra_cross_connects - i : 0});
        g.n_cross_connects = f.extra_cross_connects;
        g.oxc_db = decomposition.oxc_db;
        g.budget_db = f.fibre_loss_db + f.extra_cross_connects * decomposition.oxc_db;
        return g;
    }

    RouteGeometry geometry(const std::string& name) const {
        if (has_field_link(name)) return field_geometry(name);
        return link_geometry(name);
    }

    /// n channels on the classical grid nearest the quantum channel, equal
    /// launch power per channel.
    ChannelPlan lab_plan(int n_channels, double launch_power_dbm) const {
        ChannelPlan p;
        p.quantum_freq_thz = physics.quantum_freq_thz;
        p.grid_spacing_ghz = grid_spacing_ghz;
        for (int i = 0; i < n_channels; ++i)
            p.classical.push_back(
                {lab_first_freq_thz + i * grid_spacing_ghz / 1000.0, launch_power_dbm});
        return p;
    }

    ChannelPlan field_trial_plan() const {
        ChannelPlan p;
        p.quantum_freq_thz = physics.quantum_freq_thz;
        p.grid_spacing_ghz = field_plan.spacing_ghz;
        for (int i = 0; i < field_plan.count; ++i)
            p.classical.push_back({field_plan.first_freq_thz + i * field_plan.spacing_ghz / 1000.0,
                                   field_plan.launch_power_dbm});
        return p;
    }

    FilterSpec external_filter(double bandwidth_ghz) const {
        return FilterSpec{filter_center_thz, bandwidth_ghz, 0.5, 40.0};
    }

    QkdLinkEstimate estimate(const std::string& link, const ChannelPlan& plan,
                             const std::optional<FilterSpec>& external = {}) const {
        return estimate_link(geometry(link), plan, physics.receiver_filter(), physics, external);
    }
};

namespace detail {

inline void fit_qber_coeffs(const std::vector<LinkRow>& rows, QkdDeviceParams& dev) {
    const std::size_t m = rows.size();
    std::vector<double> A(m * 2), b(m);
    for (std::size_t i = 0; i < m; ++i) {
        A[i * 2] = 1.0;
        A[i * 2 + 1] = db_to_linear(rows[i].budget_db);
        b[i] = rows[i].qber_pct;
    }
    std::vector<double> x = lstsq(A, b, m, 2);
    if (x[0] < 0.0) {
        // error floor cannot be negative: pin it and refit the slope alone
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            num += A[i * 2 + 1] * b[i];
            den += A[i * 2 + 1] * A[i * 2 + 1];
        }
        x = {0.0, num / den};
    }
    dev.base_qber_pct = x[0];
    dev.qber_loss_coeff = x[1];
}

inline void fit_skr_coeffs(const std::vector<LinkRow>& rows, QkdDeviceParams& dev,
                           double ref_loss_db) {
    dev.skr_ref_loss_db = ref_loss_db;
    double q_ref = qber_estimate(ref_loss_db, 0.0, dev);
    double d_ref = distillable_fraction(q_ref / 100.0, dev.ec_efficiency);
    if (d_ref <= 0.0) throw CalibrationError("reference point has no distillable fraction");

    const std::size_t m = rows.size();
    std::vector<double> A(m * 2), b(m);
    for (std::size_t i = 0; i < m; ++i) {
        double q_hat = qber_estimate(rows[i].budget_db, 0.0, dev);
        double d = distillable_fraction(q_hat / 100.0, dev.ec_efficiency);
        if (d <= 0.0 || rows[i].skr_bps <= 0.0)
            throw CalibrationError("row '" + rows[i].link + "' unusable for the rate fit");
        A[i * 2] = 1.0;
        A[i * 2 + 1] = -(rows[i].budget_db - ref_loss_db) / 10.0;
        b[i] = std::log10(rows[i].skr_bps) - std::log10(d / d_ref);
    }
    std::vector<double> x = lstsq(A, b, m, 2);
    dev.skr_ref_bps = std::pow(10.0, x[0]);
    dev.skr_loss_exponent = std::max(1.0, x[1]);
}

} // namespace detail

inline CalibratedParams calibrate(const std::vector<LinkRow>& input_rows,
                                  const AnchorSet& anchors,
                                  const CalibrationConfig& cfg = {}) {
    if (input_rows.size() < 4)
        throw CalibrationError("need at least 4 link rows to calibrate");

    CalibratedParams cal;
    cal.rows = input_rows;
    cal.lab_first_freq_thz = anchors.lab_first_freq_thz;
    cal.grid_spacing_ghz = anchors.grid_spacing_ghz;
    cal.field_links = anchors.field_links;
    if (anchors.filter_sweep) {
        cal.field_plan = anchors.filter_sweep->plan;
        cal.filter_center_thz = anchors.filter_sweep->filter_center_thz;
    }

    PhysicsParams& ph = cal.physics;
    ph.quantum_freq_thz = anchors.quantum_freq_thz;
    ph.internal_filter_bandwidth_ghz = cfg.internal_filter_bandwidth_ghz;
    ph.raman.rho = cfg.rho;
    ph.raman.alpha_db_per_km = cfg.alpha_db_per_km;
    ph.fwm_window_ghz = cfg.fwm_window_ghz;
    ph.leak.rolloff_db_per_ghz = cfg.leak_rolloff_db_per_ghz;
    ph.leak.quantum_window_ghz = cfg.internal_filter_bandwidth_ghz;

    // 1. component losses
    std::vector<MeasuredBudget> budgets;
    for (const auto& r : cal.rows) budgets.push_back(r.measured());
    cal.decomposition = fit_component_losses(budgets, cfg.oxc_db);
    cal.residuals.budget_max_abs_db = cal.decomposition.max_abs_residual_db();

    // 2. QBER model against the measured budgets
    detail::fit_qber_coeffs(cal.rows, ph.device);

    // 3. rate model, referenced to the lowest measured budget
    double ref = cal.rows[0].budget_db;
    for (const auto& r : cal.rows) ref = std::min(ref, r.budget_db);
    detail::fit_skr_coeffs(cal.rows, ph.device, ref);

    double sq_sum = 0.0;
    for (auto& r : cal.rows) {
        r.fit_budget_db = cal.decomposition.reconstruct(r.measured());
        r.fit_qber_pct = qber_estimate(r.budget_db, 0.0, ph.device);
        r.fit_skr_bps = skr_estimate(r.budget_db, r.fit_qber_pct, ph.device);
        cal.residuals.qber_max_abs_pp =
            std::max(cal.residuals.qber_max_abs_pp, std::fabs(r.fit_qber_pct - r.qber_pct));
        double rel = (r.fit_skr_bps - r.skr_bps) / r.skr_bps;
        sq_sum += rel * rel;
        cal.residuals.skr_max_rel = std::max(cal.residuals.skr_max_rel, std::fabs(rel));
    }
    cal.residuals.skr_rms_rel = std::sqrt(sq_sum / cal.rows.size());

    if (cal.residuals.budget_max_abs_db > cfg.budget_tol_db)
        throw CalibrationError("budget residual " + num_str(cal.residuals.budget_max_abs_db) +
                               " dB exceeds " + num_str(cfg.budget_tol_db));
    if (cal.residuals.qber_max_abs_pp > cfg.qber_tol_pp)
        throw CalibrationError("QBER residual " + num_str(cal.residuals.qber_max_abs_pp) +
                               " pp exceeds " + num_str(cfg.qber_tol_pp));
    if (cal.residuals.skr_rms_rel > cfg.skr_rms_tol || cal.residuals.skr_max_rel > cfg.skr_max_tol)
        throw CalibrationError("SKR residuals exceed configured bounds");

    // 4. noise coefficients from the coexistence anchors
    const double threshold = ph.device.qber_abort_threshold_pct;
    const CoexistenceAnchor* lead = nullptr;
    for (const auto& a : anchors.coexistence)
        if (a.kind == CoexistenceAnchor::Kind::NoAbort) {
            lead = &a;
            break;
        }
    if (!anchors.coexistence.empty()) {
        if (!lead)
            throw CalibrationError("coexistence anchors need at least one no-abort point");

        RouteGeometry g_lead = cal.geometry(lead->link);
        ChannelPlan p_lead = cal.lab_plan(lead->n_channels, lead->launch_power_dbm);
        double n_lead = raman_noise_photon_rate(p_lead, g_lead, ph.receiver_filter(), ph.raman);
        double base = qber_estimate(g_lead.budget_db, 0.0, ph.device);
        double x_lead = db_to_linear(g_lead.budget_db);

        bool ok = false;
        for (double fill : cfg.raman_fill_ladder) {
            double target = base + fill * (threshold - base);
            ph.device.noise_qber_coeff = (target - base) / (n_lead * x_lead);
            ok = true;
            for (const auto& a : anchors.coexistence) {
                RouteGeometry g = cal.geometry(a.link);
                ChannelPlan p = cal.lab_plan(a.n_channels, a.launch_power_dbm);
                QkdLinkEstimate est =
                    estimate_link(g, p, ph.receiver_filter(), ph); // FWM not yet set
                if (a.kind == CoexistenceAnchor::Kind::NoAbort &&
                    (est.aborted || est.skr_bps < a.min_skr_bps))
                    ok = false;
                if (a.kind == CoexistenceAnchor::Kind::SkrDrop) {
                    double clean =
                        skr_estimate(g.budget_db, qber_estimate(g.budget_db, 0.0, ph.device),
                                     ph.device);
                    if (est.skr_bps < (1.0 - a.max_drop_fraction) * clean) ok = false;
                }
            }
            if (ok) break;
        }
        if (!ok)
            throw CalibrationError("no Raman coefficient satisfies the non-abort anchors");

        // four-wave-mixing term sized by the most demanding abort anchor
        double k_f = 0.0;
        for (const auto& a : anchors.coexistence) {
            if (a.kind != CoexistenceAnchor::Kind::Abort) continue;
            RouteGeometry g = cal.geometry(a.link);
            ChannelPlan p = cal.lab_plan(a.n_channels, a.launch_power_dbm);
            double q_raman =
                qber_estimate(g.budget_db,
                              raman_noise_photon_rate(p, g, ph.receiver_filter(), ph.raman),
                              ph.device);
            double need = threshold + cfg.fwm_margin_pp - q_raman;
            if (need <= 0.0) continue;
            double cube = fwm_colliding_cube_mw3(p, cfg.fwm_window_ghz);
            double weight = detail::generation_weight_km(g, cfg.alpha_db_per_km);
            if (cube <= 0.0 || weight <= 0.0)
                throw CalibrationError("abort anchor on '" + a.link +
                                       "' has no mixing product on the quantum channel and "
                                       "cannot be reached without breaking the non-abort anchors");
            double needed_kf = need / (ph.device.noise_qber_coeff * cube * weight *
                                       db_to_linear(g.budget_db));
            k_f = std::max(k_f, needed_kf);
        }
        ph.fwm_noise_coeff = k_f;

        for (const auto& a : anchors.coexistence) {
            QkdLinkEstimate est = cal.estimate(
                a.link, cal.lab_plan(a.n_channels, a.launch_power_dbm));
            switch (a.kind) {
                case CoexistenceAnchor::Kind::Abort:
                    if (!est.aborted || est.skr_bps != 0.0)
                        throw CalibrationError("abort anchor on '" + a.link + "' not satisfied");
                    break;
                case CoexistenceAnchor::Kind::NoAbort:
                    if (est.aborted || est.skr_bps < a.min_skr_bps)
                        throw CalibrationError("non-abort anchor on '" + a.link +
                                               "' broken by the mixing term");
                    break;
                case CoexistenceAnchor::Kind::SkrDrop: {
                    RouteGeometry g = cal.geometry(a.link);
                    double clean = skr_estimate(
                        g.budget_db, qber_estimate(g.budget_db, 0.0, ph.device), ph.device);
                    if (est.skr_bps < (1.0 - a.max_drop_fraction) * clean)
                        throw CalibrationError("rate-drop anchor on '" + a.link + "' violated");
                    break;
                }
            }
        }
    }

    // 5. external-filter leakage from the field-trial sweep anchors
    if (anchors.filter_sweep) {
        const FilterSweepSpec& fs = *anchors.filter_sweep;
        RouteGeometry g = cal.field_geometry(fs.link);
        ChannelPlan plan = cal.field_trial_plan();
        double raman_n = raman_noise_photon_rate(plan, g, ph.receiver_filter(), ph.raman);
        double base = qber_estimate(g.budget_db, raman_n, ph.device);
        double target = std::max(fs.abort_min_qber_pct + cfg.leak_margin_pp + 0.1,
                                 threshold + cfg.leak_margin_pp);
        double need = target - base;
        if (need <= 0.0)
            throw CalibrationError("field link already aborts before the filter opens");

        FilterLeakParams probe = ph.leak;
        probe.coeff = 1.0;
        double unit =
            filter_leak_photon_rate(plan, g, cal.external_filter(fs.abort_bw_ghz), probe);
        if (unit <= 0.0) throw CalibrationError("filter sweep anchors give no leakage path");
        ph.leak.coeff = need / (unit * ph.device.noise_qber_coeff * db_to_linear(g.budget_db));

        for (double bw = fs.ok_bw_min_ghz; bw <= fs.ok_bw_max_ghz + 1e-9; bw += 25.0) {
            QkdLinkEstimate est = cal.estimate(fs.link, plan, cal.external_filter(bw));
            if (est.aborted || est.skr_bps < fs.ok_min_skr_bps ||
                est.qber_pct > fs.ok_max_qber_pct)
                throw CalibrationError("filter sweep pass band constraint fails at " +
                                       num_str(bw) + " GHz");
        }
        QkdLinkEstimate abort_est =
            cal.estimate(fs.link, plan, cal.external_filter(fs.abort_bw_ghz));
        if (!abort_est.aborted || abort_est.qber_pct <= fs.abort_min_qber_pct)
            throw CalibrationError("filter sweep abort constraint fails");
    }

    return cal;
}

// ---- serialization ----

inline nlohmann::json to_json(const CalibratedParams& cal) {
    nlohmann::json j;
    j["schema"] = "qkdnet-params-v1";
    const QkdDeviceParams& d = cal.physics.device;
    j["device"] = {{"base_qber_pct", d.base_qber_pct},
                   {"qber_loss_coeff", d.qber_loss_coeff},
                   {"skr_ref_bps", d.skr_ref_bps},
                   {"skr_loss_exponent", d.skr_loss_exponent},
                   {"skr_ref_loss_db", d.skr_ref_loss_db},
                   {"ec_efficiency", d.ec_efficiency},
                   {"noise_qber_coeff", d.noise_qber_coeff},
                   {"qber_abort_threshold_pct", d.qber_abort_threshold_pct},
                   {"max_budget_db", d.max_budget_db}};
    j["raman"] = {{"rho", cal.physics.raman.rho},
                  {"alpha_db_per_km", cal.physics.raman.alpha_db_per_km}};
    j["fwm"] = {{"noise_coeff", cal.physics.fwm_noise_coeff},
                {"collision_window_ghz", cal.physics.fwm_window_ghz}};
    j["filter_leak"] = {{"coeff", cal.physics.leak.coeff},
                        {"rolloff_db_per_ghz", cal.physics.leak.rolloff_db_per_ghz},
                        {"quantum_window_ghz", cal.physics.leak.quantum_window_ghz}};
    j["quantum_freq_thz"] = cal.physics.quantum_freq_thz;
    j["internal_filter_bandwidth_ghz"] = cal.physics.internal_filter_bandwidth_ghz;

    nlohmann::json spans = nlohmann::json::object();
    for (const auto& [id, loss] : cal.decomposition.span_loss_db) spans[id] = loss;
    j["decomposition"] = {{"terminal_total_db", cal.decomposition.terminal_total_db},
                          {"oxc_db", cal.decomposition.oxc_db},
                          {"span_loss_db", spans},
                          {"residuals_db", cal.decomposition.residuals_db}};

    j["rows"] = nlohmann::json::array();
    for (const auto& r : cal.rows)
        j["rows"].push_back({{"link", r.link},
                             {"length_km", r.length_km},
                             {"budget_db", r.budget_db},
                             {"n_oxc", r.n_oxc},
                             {"qber_pct", r.qber_pct},
                             {"skr_bps", r.skr_bps},
                             {"fit_budget_db", r.fit_budget_db},
                             {"fit_qber_pct", r.fit_qber_pct},
                             {"fit_skr_bps", r.fit_skr_bps}});

    j["residuals"] = {{"budget_max_abs_db", cal.residuals.budget_max_abs_db},
                      {"qber_max_abs_pp", cal.residuals.qber_max_abs_pp},
                      {"skr_rms_rel", cal.residuals.skr_rms_rel},
                      {"skr_max_rel", cal.residuals.skr_max_rel}};

    j["field_links"] = nlohmann::json::array();
    for (const auto& f : cal.field_links)
        j["field_links"].push_back({{"name", f.name},
                                    {"length_km", f.length_km},
                                    {"fibre_loss_db", f.fibre_loss_db},
                                    {"extra_cross_connects", f.extra_cross_connects}});

    j["classical_grid"] = {{"first_freq_thz", cal.lab_first_freq_thz},
                           {"spacing_ghz", cal.grid_spacing_ghz}};
    j["field_plan"] = {{"first_freq_thz", cal.field_plan.first_freq_thz},
                       {"spacing_ghz", cal.field_plan.spacing_ghz},
                       {"count", cal.field_plan.count},
                       {"launch_power_dbm", cal.field_plan.launch_power_dbm}};
    j["filter_center_thz"] = cal.filter_center_thz;
    return j;
}

inline CalibratedParams calibrated_params_from_json(const nlohmann::json& j) {
    CalibratedParams cal;
    try {
        const auto& jd = j.at("device");
        QkdDeviceParams& d = cal.physics.device;
        d.base_qber_pct = jd.at("base_qber_pct").get<double>();
        d.qber_loss_coeff = jd.at("qber_loss_coeff").get<double>();
        d.skr_ref_bps = jd.at("skr_ref_bps").get<double>();
        d.skr_loss_exponent = jd.at("skr_loss_exponent").get<double>();
        d.skr_ref_loss_db = jd.at("skr_ref_loss_db").get<double>();
        d.ec_efficiency = jd.at("ec_efficiency").get<double>();
        d.noise_qber_coeff = jd.at("noise_qber_coeff").get<double>();
        d.qber_abort_threshold_pct = jd.at("qber_abort_threshold_pct").get<double>();
        d.max_budget_db = jd.at("max_budget_db").get<double>();
        cal.physics.raman.rho = j.at("raman").at("rho").get<double>();
        cal.physics.raman.alpha_db_per_km = j.at("raman").at("alpha_db_per_km").get<double>();
        cal.physics.fwm_noise_coeff = j.at("fwm").at("noise_coeff").get<double>();
        cal.physics.fwm_window_ghz = j.at("fwm").at("collision_window_ghz").get<double>();
        cal.physics.leak.coeff = j.at("filter_leak").at("coeff").get<double>();
        cal.physics.leak.rolloff_db_per_ghz =
            j.at("filter_leak").at("rolloff_db_per_ghz").get<double>();
        cal.physics.leak.quantum_window_ghz =
            j.at("filter_leak").at("quantum_window_ghz").get<double>();
        cal.physics.quantum_freq_thz = j.at("quantum_freq_thz").get<double>();
        cal.physics.internal_filter_bandwidth_ghz =
            j.at("internal_filter_bandwidth_ghz").get<double>();

        const auto& jdec = j.at("decomposition");
        cal.decomposition.terminal_total_db = jdec.at("terminal_total_db").get<double>();
        cal.decomposition.oxc_db = jdec.at("oxc_db").get<double>();
        for (const auto& [k, v] : jdec.at("span_loss_db").items())
            cal.decomposition.span_loss_db[k] = v.get<double>();
        cal.decomposition.residuals_db = jdec.at("residuals_db").get<std::vector<double>>();

        for (const auto& jr : j.at("rows")) {
            LinkRow r;
            r.link = jr.at("link").get<std::string>();
            r.span_ids = spans_from_link_name(r.link);
            r.length_km = jr.at("length_km").get<double>();
            r.budget_db = jr.at("budget_db").get<double>();
            r.n_oxc = jr.at("n_oxc").get<int>();
            r.qber_pct = jr.at("qber_pct").get<double>();
            r.skr_bps = jr.at("skr_bps").get<double>();
            r.fit_budget_db = jr.at("fit_budget_db").get<double>();
            r.fit_qber_pct = jr.at("fit_qber_pct").get<double>();
            r.fit_skr_bps = jr.at("fit_skr_bps").get<double>();
            cal.rows.push_back(std::move(r));
        }

        const auto& jres = j.at("residuals");
        cal.residuals.budget_max_abs_db = jres.at("budget_max_abs_db").get<double>();
        cal.residuals.qber_max_abs_pp = jres.at("qber_max_abs_pp").get<double>();
        cal.residuals.skr_rms_rel = jres.at("skr_rms_rel").get<double>();
        cal.residuals.skr_max_rel = jres.at("skr_max_rel").get<double>();

        for (const auto& jf : j.at("field_links")) {
            FieldLink f;
            f.name = jf.at("name").get<std::string>();
            f.length_km = jf.at("length_km").get<double>();
            f.fibre_loss_db = jf.at("fibre_loss_db").get<double>();
            f.extra_cross_connects = jf.at("extra_cross_connects").get<int>();
            cal.field_links.push_back(f);
        }

        cal.lab_first_freq_thz = j.at("classical_grid").at("first_freq_thz").get<double>();
        cal.grid_spacing_ghz = j.at("classical_grid").at("spacing_ghz").get<double>();
        const auto& jfp = j.at("field_plan");
        cal.field_plan.first_freq_thz = jfp.at("first_freq_thz").get<double>();
        cal.field_plan.spacing_ghz = jfp.at("spacing_ghz").get<double>();
        cal.field_plan.count = jfp.at("count").get<int>();
        cal.field_plan.launch_power_dbm = jfp.at("launch_power_dbm").get<double>();
        cal.filter_center_thz = j.at("filter_center_thz").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("calibrated params schema: ") + e.what());
    }
    return cal;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("short write to '" + path + "'");
}

inline CalibratedParams load_calibrated_params(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("calibrated params JSON: ") + e.what());
    }
    return calibrated_params_from_json(j);
}

inline void save_calibrated_params(const CalibratedParams& cal, const std::string& path) {
    write_text_file(path, to_json(cal).dump(2) + "\n");
}

} // namespace qkdnet
