#pragma once

#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "qkdnet/calibration.hpp"
#include "qkdnet/controller.hpp"
#include "qkdnet/csv.hpp"
#include "qkdnet/scenario.hpp"

namespace qkdnet {

struct RunResult {
    std::string events_csv;
    std::string controller_csv;
    std::string audit_csv;
    std::string summary_csv;
};

/// Deterministic discrete-event loop over one scenario. Events fire in
/// timestamp order; at equal timestamps control-plane events run before
/// device reports, which run before key-management ticks, then insertion
/// order. The whole run is a pure function of (scenario, seed).
class SimEngine {
public:
    SimEngine(const Scenario& sc, const CalibratedParams& cal)
        : sc_(sc),
          cal_(cal),
          kms_(&sc_.topology),
          controller_(sc_.topology, kms_, sc_.max_hops,
                      cal.physics.device.qber_abort_threshold_pct, sc_.rekey_interval_s),
          obs_rng_(sc_.seed, 0x0b5e7a7ull) {
        if (!cal_.physics.device.calibrated())
            throw UncalibratedError("scenario run needs calibrated parameters");
        kms_.set_base_seed(sc_.seed);
        controller_.set_session_seed(sc_.seed);
    }

    RunResult run() {
        for (const auto& r : sc_.requests) push_event(r.time_s, kPrioControl, Ev::Request, &r);
        for (const auto& f : sc_.faults) push_event(f.time_s, kPrioControl, Ev::Fault, &f);

        while (!queue_.empty()) {
            Ev ev = queue_.top();
            queue_.pop();
            if (ev.t > sc_.duration_s + 1e-9) continue;
            dispatch(ev);
            drain_logs(ev.t);
        }

        return assemble();
    }

private:
    static constexpr int kPrioControl = 0;
    static constexpr int kPrioDevice = 1;
    static constexpr int kPrioKms = 2;

    struct Ev {
        enum Kind { Request, Fault, WarmupDone, ReportDue, TunnelRekey };
        double t = 0.0;
        int prio = 0;
        long seq = 0;
        Kind kind = Request;
        const void* payload = nullptr;
        int conn_id = -1;
        std::string route_sig;

        bool operator<(const Ev& o) const {
            // reversed for std::priority_queue (min first)
            if (t != o.t) return t > o.t;
            if (prio != o.prio) return prio > o.prio;
            return seq > o.seq;
        }
    };

    struct UnifiedRow {
        double t;
        std::string module, event, conn, pair, route, qber, skr, bits, buffer, action;
    };

    void push_event(double t, int prio, Ev::Kind kind, const void* payload, int conn_id = -1,
                    std::string route_sig = {}) {
        queue_.push(Ev{t, prio, next_seq_++, kind, payload, conn_id, std::move(route_sig)});
    }

    void dispatch(const Ev& ev) {
        switch (ev.kind) {
            case Ev::Request: on_request(ev); break;
            case Ev::Fault: on_fault(ev); break;
            case Ev::WarmupDone: on_warmup(ev); break;
            case Ev::ReportDue: on_report_due(ev); break;
            case Ev::TunnelRekey: on_rekey(ev); break;
        }
    }

    void on_request(const Ev& ev) {
        const auto& spec = *static_cast<const RequestSpec*>(ev.payload);
        try {
            ConnectionState& conn = controller_.handle_request(spec.request, ev.t);
            if (conn.state == ConnState::QkdStarting) schedule_warmup(conn, ev.t);
        } catch (const DeviceBusyError& e) {
            engine_row(ev.t, "engine", "request_rejected", "", "", "", e.what());
        } catch (const DeviceMismatchError& e) {
            engine_row(ev.t, "engine", "request_rejected", "", "", "", e.what());
        }
    }

    void on_fault(const Ev& ev) {
        const auto& f = *static_cast<const FaultSpec*>(ev.payload);
        if (f.kind == "forced_qber") {
            forced_qber_[f.span] = f.qber_pct;
            engine_row(ev.t, "engine", "fault", "", "", f.span,
                       "forced_qber=" + num_str(f.qber_pct));
        } else {
            bool up = f.kind == "span_up";
            controller_.update_route_table(f.span, up);
            engine_row(ev.t, "engine", "fault", "", "", f.span, f.kind);
        }
    }

    void schedule_warmup(ConnectionState& conn, double now) {
        QkdSession* s = kms_.find_session(conn.pair_id());
        if (!s) return;
        push_event(now + s->warmup_s, kPrioDevice, Ev::WarmupDone, nullptr, conn.id,
                   s->route_signature);
    }

    bool session_current(const ConnectionState& conn, const std::string& sig,
                         QkdSession** out) {
        QkdSession* s = kms_.find_session(conn.pair_id());
        if (!s || s->route_signature != sig) return false;
        if (!conn.route || conn.route->signature() != sig) return false;
        if (out) *out = s;
        return true;
    }

    void on_warmup(const Ev& ev) {
        auto it = controller_.connections().find(ev.conn_id);
        if (it == controller_.connections().end()) return;
        const ConnectionState& conn = it->second;
        QkdSession* s = nullptr;
        if (!session_current(conn, ev.route_sig, &s)) return; // superseded by a reroute
        if (s->state != SessionState::Establishing) return;
        kms_.mark_generating(conn.pair_id());
        engine_row(ev.t, "device", "session_generating", std::to_string(conn.id),
                   conn.pair_id(), ev.route_sig, "");
        push_event(ev.t + s->report_interval_s, kPrioDevice, Ev::ReportDue, nullptr, conn.id,
                   ev.route_sig);
    }

    QkdLinkEstimate estimate_for(const ConnectionState& conn) {
        ChannelPlan plan = conn.request.plan;
        plan.quantum_freq_thz = cal_.physics.quantum_freq_thz;
        if (conn.request.kind == ConnKind::QuantumSecured) plan.classical.clear();
        QkdLinkEstimate est = estimate_link(sc_.topology, *conn.route, plan,
                                            cal_.physics.receiver_filter(), cal_.physics);
        double forced = -1.0;
        for (const auto& sid : conn.route->spans) {
            auto fit = forced_qber_.find(sid);
            if (fit != forced_qber_.end()) forced = std::max(forced, fit->second);
        }
        if (forced >= 0.0) {
            est.qber_pct = forced;
            est.skr_bps = skr_estimate(route_geometry(sc_.topology, *conn.route).budget_db,
                                       forced, cal_.physics.device);
            est.aborted = forced >= cal_.physics.device.qber_abort_threshold_pct;
            if (est.aborted) est.skr_bps = 0.0;
        }
        return est;
    }

    void on_report_due(const Ev& ev) {
        auto it = controller_.connections().find(ev.conn_id);
        if (it == controller_.connections().end()) return;
        const ConnectionState& conn = it->second;
        QkdSession* s = nullptr;
        if (!session_current(conn, ev.route_sig, &s)) return;
        if (s->state != SessionState::Generating) return;

        QkdLinkEstimate est = estimate_for(conn);
        KeyRateReport rep = kms_.session_report(conn.pair_id(), est, obs_rng_, ev.t,
                                                sc_.observation_sigma_rel);
        engine_row(ev.t, "device", "report", std::to_string(conn.id), conn.pair_id(),
                   ev.route_sig,
                   "qber=" + num_str(rep.qber_pct) + " skr=" + num_str(rep.skr_bps));

        if (conn.request.kind == ConnKind::Coexistence) {
            auto feas = classical_feasibility(conn.request.plan,
                                              route_geometry(sc_.topology, *conn.route),
                                              kDetectorSensitivityDbm);
            int bad = 0;
            for (const auto& f : feas)
                if (!f.feasible) ++bad;
            engine_row(ev.t, "device", "classical_check", std::to_string(conn.id),
                       conn.pair_id(), ev.route_sig,
                       bad == 0 ? "feasible" : "infeasible=" + std::to_string(bad));
        }

        ReportAction action =
            controller_.on_qkd_report(conn.id, Observation{rep.qber_pct, rep.skr_bps}, ev.t);
        switch (action) {
            case ReportAction::Accept:
                if (conn.tunnel && rekey_scheduled_.insert(conn.id).second)
                    push_event(conn.tunnel->next_rekey_s, kPrioKms, Ev::TunnelRekey, nullptr,
                               conn.id);
                push_event(ev.t + s->report_interval_s, kPrioDevice, Ev::ReportDue, nullptr,
                           conn.id, ev.route_sig);
                break;
            case ReportAction::Continue:
                push_event(ev.t + s->report_interval_s, kPrioDevice, Ev::ReportDue, nullptr,
                           conn.id, ev.route_sig);
                break;
            case ReportAction::Reroute:
                schedule_warmup(controller_.connection(conn.id), ev.t);
                break;
            case ReportAction::Fail: break;
        }
    }

    void on_rekey(const Ev& ev) {
        auto it = controller_.connections().find(ev.conn_id);
        if (it == controller_.connections().end()) return;
        ConnectionState& conn = controller_.connection(ev.conn_id);
        if (!conn.tunnel || conn.tunnel->state == TunnelState::Closed) return;
        kms_.tunnel_tick(*conn.tunnel, ev.t);
        if (conn.tunnel->next_rekey_s <= sc_.duration_s + 1e-9)
            push_event(conn.tunnel->next_rekey_s, kPrioKms, Ev::TunnelRekey, nullptr, conn.id);
    }

    void engine_row(double t, const std::string& module, const std::string& event,
                    const std::string& conn, const std::string& pair, const std::string& route,
                    const std::string& action) {
        unified_.push_back({t, module, event, conn, pair, route, "", "", "", "", action});
    }

    /// Pulls freshly appended controller/KMS records into the unified log so
    /// it reflects true processing order.
    void drain_logs(double) {
        const auto& cl = controller_.event_log();
        for (; drained_ctrl_ < cl.size(); ++drained_ctrl_) {
            const ControllerEvent& e = cl[drained_ctrl_];
            unified_.push_back({e.timestamp_s, "controller", e.event,
                                std::to_string(e.conn_id), "", e.route, e.qber_pct, e.skr_bps,
                                "", "", e.action});
        }
        for (const auto& [pair, ks] : kms_.stores()) {
            std::size_t& seen = drained_audit_[pair];
            const auto& al = ks.audit_log();
            for (; seen < al.size(); ++seen) {
                const AuditEntry& a = al[seen];
                unified_.push_back({a.timestamp_s, "kms", a.event, "", a.pair_id, "", "", "",
                                    num_str(static_cast<long long>(a.bits)),
                                    num_str(static_cast<long long>(a.buffer_bits)), ""});
            }
        }
    }

    RunResult assemble() {
        RunResult out;

        CsvWriter events({"timestamp_s", "module", "event", "conn_id", "pair_id", "route",
                          "qber_pct", "skr_bps", "bits", "buffer_bits", "action"});
        for (const auto& r : unified_)
            events.write_row({num_str(r.t), r.module, r.event, r.conn, r.pair, r.route, r.qber,
                              r.skr, r.bits, r.buffer, r.action});
        out.events_csv = events.str();

        CsvWriter ctrl({"timestamp_s", "conn_id", "event", "route", "qber_pct", "skr_bps",
                        "action"});
        for (const auto& e : controller_.event_log())
            ctrl.write_row({num_str(e.timestamp_s), std::to_string(e.conn_id), e.event, e.route,
                            e.qber_pct, e.skr_bps, e.action});
        out.controller_csv = ctrl.str();

        CsvWriter audit({"timestamp_s", "pair_id", "event", "bits", "buffer_bits"});
        for (const auto& a : kms_.merged_audit())
            audit.write_row({num_str(a.timestamp_s), a.pair_id, a.event,
                             num_str(static_cast<long long>(a.bits)),
                             num_str(static_cast<long long>(a.buffer_bits))});
        out.audit_csv = audit.str();

        CsvWriter sum({"conn_id", "src", "dst", "kind", "final_state", "routes_tried",
                       "last_qber_pct", "last_skr_bps", "key_bits_generated",
                       "key_bits_consumed", "buffer_bits", "tunnel_state", "tunnel_rekeys",
                       "starvation_events"});
        for (const auto& [id, c] : controller_.connections()) {
            std::string gen = "0", used = "0", buf = "0", starve = "0";
            if (kms_.has_store(c.pair_id())) {
                const KeyStore& ks = kms_.store(c.pair_id());
                gen = num_str(static_cast<long long>(ks.generated_bits()));
                used = num_str(static_cast<long long>(ks.consumed_bits()));
                buf = num_str(static_cast<long long>(ks.total_bits()));
                starve = num_str(static_cast<long long>(ks.starvation_events()));
            }
            sum.write_row({std::to_string(id), c.request.src, c.request.dst,
                           to_string(c.request.kind), to_string(c.state),
                           std::to_string(c.tried_routes.size()),
                           c.last_report ? num_str(c.last_report->qber_pct) : "",
                           c.last_report ? num_str(c.last_report->skr_bps) : "", gen, used, buf,
                           c.tunnel ? to_string(c.tunnel->state) : "",
                           c.tunnel ? num_str(static_cast<long long>(c.tunnel->rekeys)) : "",
                           starve});
        }
        out.summary_csv = sum.str();
        return out;
    }

public:
    static constexpr double kDetectorSensitivityDbm = -35.0;

    const Controller& controller() const { return controller_; }
    const Kms& kms() const { return kms_; }

private:
    Scenario sc_;
    const CalibratedParams& cal_;
    Kms kms_;
    Controller controller_;
    Rng obs_rng_;

    std::priority_queue<Ev> queue_;
    long next_seq_ = 0;
    std::map<std::string, double> forced_qber_;
    std::set<int> rekey_scheduled_;
    std::vector<UnifiedRow> unified_;
    std::size_t drained_ctrl_ = 0;
    std::map<std::string, std::size_t> drained_audit_;
};

/// Convenience entry point: load params named by the scenario and run.
inline RunResult run_scenario(const Scenario& sc, const CalibratedParams& cal) {
    SimEngine engine(sc, cal);
    return engine.run();
}

} // namespace qkdnet
