#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkdnet/errors.hpp"
#include "qkdnet/units.hpp"

namespace qkdnet {

enum class DeviceKind { AliceTerminal, BobTerminal, Transponder };

inline std::string to_string(DeviceKind k) {
    switch (k) {
        case DeviceKind::AliceTerminal: return "alice";
        case DeviceKind::BobTerminal: return "bob";
        case DeviceKind::Transponder: return "transponder";
    }
    return "?";
}

inline DeviceKind device_kind_from_string(const std::string& s) {
    if (s == "alice") return DeviceKind::AliceTerminal;
    if (s == "bob") return DeviceKind::BobTerminal;
    if (s == "transponder") return DeviceKind::Transponder;
    throw ParseError("unknown device kind '" + s + "'");
}

struct NodeSpec {
    std::string id;
    double oxc_loss_db = 1.0;
    double terminal_tx_loss_db = 0.0;
    double terminal_rx_loss_db = 0.0;
    std::set<DeviceKind> devices;

    bool has_device(DeviceKind k) const { return devices.count(k) > 0; }
};

struct FibreSpan {
    std::string id;
    std::string a;
    std::string b;
    double length_km = 0.0;
    std::optional<double> span_loss_db;         // measured, overrides the coefficient
    std::optional<double> attenuation_db_per_km;

    double loss_db() const {
        if (span_loss_db) return *span_loss_db;
        return length_km * attenuation_db_per_km.value_or(0.2);
    }

    bool touches(const std::string& n) const { return a == n || b == n; }
    std::string other(const std::string& n) const { return a == n ? b : a; }
};

/// A simple path through the topology. One cross-connection per node on the
/// path (entry and exit endpoints plus each pass-through), so a single-span
/// route counts 2 and the degenerate single-node loopback counts 1.
struct Route {
    std::vector<std::string> nodes;
    std::vector<std::string> spans;

    int n_cross_connects() const { return static_cast<int>(nodes.size()); }
    const std::string& src() const { return nodes.front(); }
    const std::string& dst() const { return nodes.back(); }

    /// Stable identity for logs and tie-breaking: node sequence joined by '-'.
    std::string signature() const {
        std::string s;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (i) s += '-';
            s += nodes[i];
        }
        return s;
    }
};

struct Violation {
    enum class Severity { Error, Warning };
    Severity severity;
    std::string element;
    std::string message;
};

class Topology {
public:
    std::vector<NodeSpec> nodes;
    std::vector<FibreSpan> spans;

    const NodeSpec* find_node(const std::string& id) const {
        for (const auto& n : nodes)
            if (n.id == id) return &n;
        return nullptr;
    }

    const NodeSpec& node(const std::string& id) const {
        const NodeSpec* n = find_node(id);
        if (!n) throw ValidationError("unknown node '" + id + "'");
        return *n;
    }

    const FibreSpan* find_span(const std::string& id) const {
        for (const auto& s : spans)
            if (s.id == id) return &s;
        return nullptr;
    }

    const FibreSpan& span(const std::string& id) const {
        const FibreSpan* s = find_span(id);
        if (!s) throw ValidationError("unknown span '" + id + "'");
        return *s;
    }
};

inline std::vector<Violation> validate(const Topology& topo) {
    std::vector<Violation> out;
    auto err = [&](const std::string& el, const std::string& msg) {
        out.push_back({Violation::Severity::Error, el, msg});
    };
    auto warn = [&](const std::string& el, const std::string& msg) {
        out.push_back({Violation::Severity::Warning, el, msg});
    };

    if (topo.nodes.empty()) err("topology", "node list is empty");

    std::set<std::string> node_ids;
    for (const auto& n : topo.nodes) {
        if (!node_ids.insert(n.id).second) err(n.id, "duplicate node id");
        if (n.oxc_loss_db < 0) err(n.id, "negative oxc_loss_db");
        if (n.terminal_tx_loss_db < 0) err(n.id, "negative terminal_tx_loss_db");
        if (n.terminal_rx_loss_db < 0) err(n.id, "negative terminal_rx_loss_db");
        if (n.has_device(DeviceKind::BobTerminal) && n.terminal_rx_loss_db == 0.0)
            warn(n.id, "Bob terminal without a declared receiver insertion loss");
        if (n.has_device(DeviceKind::AliceTerminal) && n.terminal_tx_loss_db == 0.0)
            warn(n.id, "Alice terminal without a declared transmitter insertion loss");
    }

    std::set<std::string> span_ids;
    for (const auto& s : topo.spans) {
        if (!span_ids.insert(s.id).second) err(s.id, "duplicate span id");
        if (s.length_km < 0) err(s.id, "negative length_km");
        if (s.span_loss_db && *s.span_loss_db < 0) err(s.id, "negative span_loss_db");
        if (s.attenuation_db_per_km && *s.attenuation_db_per_km < 0)
            err(s.id, "negative attenuation_db_per_km");
        if (!node_ids.count(s.a)) err(s.id, "span endpoint '" + s.a + "' is not a node");
        if (!node_ids.count(s.b)) err(s.id, "span endpoint '" + s.b + "' is not a node");
    }
    return out;
}

inline Topology parse_topology_json(const nlohmann::json& j) {
    Topology topo;
    if (!j.is_object() || !j.contains("nodes") || !j.contains("spans"))
        throw ParseError("topology must be an object with 'nodes' and 'spans'");
    int span_seq = 0;
    for (const auto& jn : j.at("nodes")) {
        NodeSpec n;
        n.id = jn.at("id").get<std::string>();
        n.oxc_loss_db = jn.value("oxc_loss_db", 1.0);
        n.terminal_tx_loss_db = jn.value("terminal_tx_loss_db", 0.0);
        n.terminal_rx_loss_db = jn.value("terminal_rx_loss_db", 0.0);
        if (jn.contains("devices"))
            for (const auto& d : jn.at("devices"))
                n.devices.insert(device_kind_from_string(d.get<std::string>()));
        topo.nodes.push_back(std::move(n));
    }
    for (const auto& js : j.at("spans")) {
        FibreSpan s;
        s.a = js.at("a").get<std::string>();
        s.b = js.at("b").get<std::string>();
        s.id = js.value("id", s.a + "~" + s.b + "#" + std::to_string(span_seq));
        ++span_seq;
        s.length_km = js.value("length_km", 0.0);
        if (js.contains("span_loss_db")) s.span_loss_db = js.at("span_loss_db").get<double>();
        if (js.contains("attenuation_db_per_km"))
            s.attenuation_db_per_km = js.at("attenuation_db_per_km").get<double>();
        topo.spans.push_back(std::move(s));
    }
    return topo;
}

inline Topology load_topology(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("topology JSON: ") + e.what());
    }
    Topology topo;
    try {
        topo = parse_topology_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("topology schema: ") + e.what());
    }
    for (const auto& v : validate(topo))
        if (v.severity == Violation::Severity::Error)
            throw ValidationError(v.element + ": " + v.message);
    return topo;
}

/// Fixed insertion at the sender plus receiver ends of a quantum path.
inline double terminal_total_db(const Topology& topo, const Route& route) {
    return topo.node(route.src()).terminal_tx_loss_db +
           topo.node(route.dst()).terminal_rx_loss_db;
}

inline double route_loss_db(const Topology& topo, const Route& route) {
    double loss = terminal_total_db(topo, route);
    for (const auto& sid : route.spans) loss += topo.span(sid).loss_db();
    for (const auto& nid : route.nodes) loss += topo.node(nid).oxc_loss_db;
    return loss;
}

/// All simple paths from src to dst with at most max_hops spans, sorted by
/// ascending route loss; equal-loss routes order by their node sequence.
inline std::vector<Route> enumerate_routes(const Topology& topo, const std::string& src,
                                           const std::string& dst, int max_hops = 3,
                                           const std::set<std::string>& excluded_spans = {}) {
    if (src == dst) throw ValidationError("enumerate_routes: src == dst");
    topo.node(src);
    topo.node(dst);
    std::vector<Route> found;
    std::vector<std::string> node_stack{src};
    std::vector<std::string> span_stack;
    std::set<std::string> visited{src};

    auto dfs = [&](auto&& self, const std::string& at) -> void {
        if (at == dst) {
            found.push_back(Route{node_stack, span_stack});
            return;
        }
        if (static_cast<int>(span_stack.size()) >= max_hops) return;
        for (const auto& s : topo.spans) {
            if (!s.touches(at) || excluded_spans.count(s.id)) continue;
            std::string nxt = s.other(at);
            if (nxt == at || visited.count(nxt)) continue;
            visited.insert(nxt);
            node_stack.push_back(nxt);
            span_stack.push_back(s.id);
            self(self, nxt);
            span_stack.pop_back();
            node_stack.pop_back();
            visited.erase(nxt);
        }
    };
    dfs(dfs, src);

    if (found.empty()) throw NoRouteError("no route from " + src + " to " + dst);
    std::sort(found.begin(), found.end(), [&](const Route& x, const Route& y) {
        double lx = route_loss_db(topo, x), ly = route_loss_db(topo, y);
        if (lx != ly) return lx < ly;
        return x.nodes < y.nodes;
    });
    return found;
}

enum class PairingMode { Switched, StaticFullMesh };

/// QKD terminal pairs needed for any-to-any direct links: N with optical
/// switching, N(N-1)/2 when every pair owns a dedicated static link.
inline long long min_qkd_pairs(long long n_nodes, PairingMode mode) {
    if (n_nodes < 1) throw ValidationError("min_qkd_pairs: n_nodes must be >= 1");
    if (mode == PairingMode::Switched) return n_nodes;
    return n_nodes * (n_nodes - 1) / 2;
}

} // namespace qkdnet
