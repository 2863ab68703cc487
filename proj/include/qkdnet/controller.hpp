#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qkdnet/channel.hpp"
#include "qkdnet/errors.hpp"
#include "qkdnet/kms.hpp"
#include "qkdnet/topology.hpp"
#include "qkdnet/units.hpp"

namespace qkdnet {

enum class ConnKind { QuantumSecured, ClassicalOnly, Coexistence };

inline std::string to_string(ConnKind k) {
    switch (k) {
        case ConnKind::QuantumSecured: return "quantum_secured";
        case ConnKind::ClassicalOnly: return "classical_only";
        case ConnKind::Coexistence: return "coexistence";
    }
    return "?";
}

inline ConnKind conn_kind_from_string(const std::string& s) {
    if (s == "quantum_secured") return ConnKind::QuantumSecured;
    if (s == "classical_only") return ConnKind::ClassicalOnly;
    if (s == "coexistence") return ConnKind::Coexistence;
    throw ParseError("unknown connection kind '" + s + "'");
}

struct ConnectionRequest {
    std::string src;
    std::string dst;
    ConnKind kind = ConnKind::QuantumSecured;
    ChannelPlan plan; // classical channels riding the same path (coexistence)
};

enum class ConnState {
    RouteSelected,
    PathInstalled,
    QkdStarting,
    Monitoring,
    EncryptionActive,
    Rerouting,
    Failed,
    TornDown,
};

inline std::string to_string(ConnState s) {
    switch (s) {
        case ConnState::RouteSelected: return "RouteSelected";
        case ConnState::PathInstalled: return "PathInstalled";
        case ConnState::QkdStarting: return "QkdStarting";
        case ConnState::Monitoring: return "Monitoring";
        case ConnState::EncryptionActive: return "EncryptionActive";
        case ConnState::Rerouting: return "Rerouting";
        case ConnState::Failed: return "Failed";
        case ConnState::TornDown: return "TornDown";
    }
    return "?";
}

enum class ReportAction { Accept, Continue, Reroute, Fail };

inline std::string to_string(ReportAction a) {
    switch (a) {
        case ReportAction::Accept: return "Accept";
        case ReportAction::Continue: return "Continue";
        case ReportAction::Reroute: return "Reroute";
        case ReportAction::Fail: return "Fail";
    }
    return "?";
}

struct CrossConnectCmd {
    std::string node;
    std::string in_port;
    std::string out_port;
};

struct ConnectionState {
    int id = -1;
    ConnectionRequest request;
    std::optional<Route> route;
    ConnState state = ConnState::RouteSelected;
    std::vector<std::pair<double, ConnState>> history;
    std::set<std::string> tried_routes; // signatures; never retried in this lifetime
    std::optional<Observation> last_report;
    bool had_accept = false;
    std::optional<Tunnel> tunnel;

    std::string pair_id() const { return Kms::pair_id(request.src, request.dst); }
};

struct ControllerEvent {
    double timestamp_s = 0.0;
    int conn_id = -1;
    std::string event;
    std::string route;
    std::string qber_pct; // empty when not applicable
    std::string skr_bps;
    std::string action;
};

/// QKD-aware path controller: looks up precomputed routes in loss order,
/// installs cross-connections, starts key generation, and reacts to the
/// periodic QBER reports by accepting, rerouting, or failing the connection.
class Controller {
public:
    Controller(const Topology& topo, Kms& kms, int max_hops = 3,
               double qber_threshold_pct = 6.0, double rekey_interval_s = 60.0)
        : topo_(&topo),
          kms_(&kms),
          max_hops_(max_hops),
          threshold_pct_(qber_threshold_pct),
          rekey_interval_s_(rekey_interval_s) {}

    const std::vector<ControllerEvent>& event_log() const { return log_; }
    const std::map<int, ConnectionState>& connections() const { return conns_; }

    ConnectionState& connection(int id) {
        auto it = conns_.find(id);
        if (it == conns_.end()) throw StaleReportError("no connection " + std::to_string(id));
        return it->second;
    }

    const std::vector<Route>& routes_for(const std::string& src, const std::string& dst) {
        auto key = std::make_pair(src, dst);
        auto it = table_.find(key);
        if (it == table_.end()) {
            std::vector<Route> routes;
            try {
                routes = enumerate_routes(*topo_, src, dst, max_hops_, down_spans_);
            } catch (const NoRouteError&) {
                routes = {};
            }
            it = table_.emplace(key, std::move(routes)).first;
        }
        return it->second;
    }

    /// New-request flow: pick the lowest-loss route, install its flow rules,
    /// and (for quantum kinds) issue the start-QKD message. Returns the
    /// connection in QkdStarting, PathInstalled (classical), or Failed (no
    /// viable route).
    ConnectionState& handle_request(const ConnectionRequest& req, double now) {
        if (req.src == req.dst) throw ValidationError("request src == dst");
        bool quantum = req.kind != ConnKind::ClassicalOnly;
        if (quantum) {
            if (!topo_->node(req.src).has_device(DeviceKind::AliceTerminal))
                throw DeviceMismatchError("no Alice terminal at '" + req.src + "'");
            if (!topo_->node(req.dst).has_device(DeviceKind::BobTerminal))
                throw DeviceMismatchError("no Bob terminal at '" + req.dst + "'");
            for (const auto& [id, c] : conns_) {
                if (c.state == ConnState::Failed || c.state == ConnState::TornDown) continue;
                if (c.request.kind == ConnKind::ClassicalOnly) continue;
                if (c.request.src == req.src)
                    throw DeviceBusyError("Alice terminal at '" + req.src + "' is busy");
                if (c.request.dst == req.dst)
                    throw DeviceBusyError("Bob terminal at '" + req.dst + "' is busy");
            }
        }

        int id = next_conn_id_++;
        ConnectionState& conn = conns_[id];
        conn.id = id;
        conn.request = req;
        enter(conn, ConnState::RouteSelected, now);
        log(now, id, "request", "", "", "", to_string(req.kind));

        if (!advance_to_route(conn, now)) return conn;
        if (!quantum) return conn;

        start_session(conn, now);
        return conn;
    }

    /// Flow rules for one route: one port-to-port command per cross-connected
    /// node. Re-installing the same mapping for the same connection is a
    /// no-op; claiming a port held by another connection is a conflict.
    std::vector<CrossConnectCmd> install_path(int conn_id, const Route& route,
                                              ConnKind kind = ConnKind::QuantumSecured) {
        std::vector<CrossConnectCmd> cmds = cross_connect_commands(route, kind);
        for (const auto& c : cmds) {
            auto key = std::make_pair(c.node, c.in_port);
            auto it = ports_.find(key);
            if (it != ports_.end() && (it->second.first != conn_id || it->second.second != c.out_port))
                throw PortConflictError("port " + c.node + ":" + c.in_port + " already connected");
            auto okey = std::make_pair(c.node, c.out_port);
            auto oit = ports_.find(okey);
            if (oit != ports_.end() && (oit->second.first != conn_id || oit->second.second != c.in_port))
                throw PortConflictError("port " + c.node + ":" + c.out_port + " already connected");
        }
        for (const auto& c : cmds) {
            ports_[{c.node, c.in_port}] = {conn_id, c.out_port};
            ports_[{c.node, c.out_port}] = {conn_id, c.in_port};
        }
        return cmds;
    }

    static std::vector<CrossConnectCmd> cross_connect_commands(
        const Route& route, ConnKind kind = ConnKind::QuantumSecured) {
        std::vector<CrossConnectCmd> cmds;
        std::string add = kind == ConnKind::ClassicalOnly ? "dev:bvt-tx" : "dev:alice";
        std::string drop = kind == ConnKind::ClassicalOnly ? "dev:bvt-rx" : "dev:bob";
        const auto& nodes = route.nodes;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            std::string in = i == 0 ? add : "span:" + route.spans[i - 1];
            std::string out = i + 1 < nodes.size() ? "span:" + route.spans[i] : drop;
            cmds.push_back({nodes[i], in, out});
        }
        return cmds;
    }

    /// Next untried route for this connection, in table order.
    std::optional<Route> next_route(const ConnectionState& conn) {
        for (const auto& r : routes_for(conn.request.src, conn.request.dst))
            if (!conn.tried_routes.count(r.signature())) return r;
        return std::nullopt;
    }

    /// Reaction to one monitoring report. Below threshold: first report
    /// activates encryption, later ones continue. At or above threshold:
    /// reroute within this event, or fail once the table is exhausted.
    ReportAction on_qkd_report(int conn_id, const Observation& obs, double now) {
        ConnectionState& conn = connection(conn_id);
        if (conn.state == ConnState::TornDown || conn.state == ConnState::Failed)
            throw StaleReportError("report for finished connection " + std::to_string(conn_id));
        if (conn.state != ConnState::QkdStarting && conn.state != ConnState::Monitoring &&
            conn.state != ConnState::EncryptionActive)
            throw StaleReportError("report outside a monitoring state");

        conn.last_report = obs;
        if (conn.state == ConnState::QkdStarting) enter(conn, ConnState::Monitoring, now);

        if (obs.qber_pct < threshold_pct_) {
            if (conn.state == ConnState::Monitoring) {
                enter(conn, ConnState::EncryptionActive, now);
                conn.had_accept = true;
                if (!conn.tunnel) {
                    Tunnel t;
                    t.pair_id = conn.pair_id();
                    t.rekey_interval_s = rekey_interval_s_;
                    t.state = TunnelState::Open;
                    t.next_rekey_s = now;
                    conn.tunnel = t;
                }
                log(now, conn_id, "report", conn.route->signature(), num_str(obs.qber_pct),
                    num_str(obs.skr_bps), "Accept");
                return ReportAction::Accept;
            }
            log(now, conn_id, "report", conn.route->signature(), num_str(obs.qber_pct),
                num_str(obs.skr_bps), "Continue");
            return ReportAction::Continue;
        }

        // Threshold violation: the current path is unsatisfactory.
        log(now, conn_id, "report", conn.route->signature(), num_str(obs.qber_pct),
            num_str(obs.skr_bps), "Reroute");
        enter(conn, ConnState::Rerouting, now);
        release_ports(conn_id);
        kms_->session_end(conn.pair_id(), now, /*aborted=*/true);
        if (!advance_to_route(conn, now)) return ReportAction::Fail;
        start_session(conn, now);
        return ReportAction::Reroute;
    }

    void teardown(int conn_id, double now) {
        ConnectionState& conn = connection(conn_id);
        if (conn.state == ConnState::TornDown) {
            log(now, conn_id, "teardown", "", "", "", "noop");
            return;
        }
        release_ports(conn_id);
        kms_->session_end(conn.pair_id(), now, /*aborted=*/false);
        if (conn.tunnel) conn.tunnel->state = TunnelState::Closed;
        enter(conn, ConnState::TornDown, now);
        log(now, conn_id, "teardown", "", "", "", "done");
    }

    /// Recomputes the cached route lists after a link event. Connections keep
    /// their installed route until their own next reroute.
    void update_route_table(const std::string& span_id, bool up) {
        if (up)
            down_spans_.erase(span_id);
        else
            down_spans_.insert(span_id);
        for (auto& [key, routes] : table_) {
            try {
                routes = enumerate_routes(*topo_, key.first, key.second, max_hops_, down_spans_);
            } catch (const NoRouteError&) {
                routes.clear();
            }
        }
    }

    std::string dump_route_table() {
        std::string out;
        for (const auto& [key, routes] : table_) {
            out += key.first + " -> " + key.second + "\n";
            for (const auto& r : routes)
                out += "  " + r.signature() + "  " +
                       num_str_fixed(route_loss_db(*topo_, r), 3) + " dB, " +
                       std::to_string(r.n_cross_connects()) + " xc\n";
        }
        return out;
    }

    const std::map<std::pair<std::string, std::string>, std::pair<int, std::string>>& ports()
        const {
        return ports_;
    }

private:
    void enter(ConnectionState& conn, ConnState s, double now) {
        conn.state = s;
        conn.history.push_back({now, s});
        log(now, conn.id, "state", conn.route ? conn.route->signature() : "", "", "",
            to_string(s));
    }

    void log(double t, int conn_id, const std::string& event, const std::string& route,
             const std::string& qber, const std::string& skr, const std::string& action) {
        log_.push_back({t, conn_id, event, route, qber, skr, action});
    }

    void release_ports(int conn_id) {
        for (auto it = ports_.begin(); it != ports_.end();)
            if (it->second.first == conn_id)
                it = ports_.erase(it);
            else
                ++it;
    }

    /// Selects and installs the next viable route; Failed when none is left.
    bool advance_to_route(ConnectionState& conn, double now) {
        while (true) {
            std::optional<Route> r = next_route(conn);
            if (!r) {
                enter(conn, ConnState::Failed, now);
                log(now, conn.id, "exhausted", "", "", "", "Fail");
                return false;
            }
            conn.tried_routes.insert(r->signature());
            try {
                auto cmds = install_path(conn.id, *r, conn.request.kind);
                conn.route = *r;
                enter(conn, ConnState::PathInstalled, now);
                log(now, conn.id, "install", r->signature(), "", "",
                    std::to_string(cmds.size()) + " xc");
                return true;
            } catch (const PortConflictError&) {
                log(now, conn.id, "install", r->signature(), "", "", "PortConflict");
                // fall through to the next candidate route
            }
        }
    }

    void start_session(ConnectionState& conn, double now) {
        kms_->session_start(conn.request.src, conn.request.dst, conn.route->signature(),
                            session_seed_ ^ hash_str(conn.route->signature()) ^
                                static_cast<std::uint64_t>(conn.id) * 0x9e3779b97f4a7c15ull,
                            now);
        enter(conn, ConnState::QkdStarting, now);
        log(now, conn.id, "qkd_start", conn.route->signature(), "", "", conn.pair_id());
    }

public:
    void set_session_seed(std::uint64_t s) { session_seed_ = s; }

private:
    const Topology* topo_;
    Kms* kms_;
    int max_hops_;
    double threshold_pct_;
    double rekey_interval_s_;
    std::uint64_t session_seed_ = 0;

    std::map<std::pair<std::string, std::string>, std::vector<Route>> table_;
    std::set<std::string> down_spans_;
    std::map<int, ConnectionState> conns_;
    int next_conn_id_ = 0;
    std::map<std::pair<std::string, std::string>, std::pair<int, std::string>> ports_;
    std::vector<ControllerEvent> log_;
};

} // namespace qkdnet
