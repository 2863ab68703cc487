#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qkdnet/errors.hpp"
#include "qkdnet/qkd.hpp"
#include "qkdnet/rng.hpp"
#include "qkdnet/topology.hpp"

namespace qkdnet {

struct AuditEntry {
    double timestamp_s = 0.0;
    std::string pair_id;
    std::string event; // push | reserve | starve
    std::uint64_t bits = 0;
    std::uint64_t buffer_bits = 0;
};

/// A reserved slice of stored key material. Ranges reference block ids and
/// bit offsets, so reservations are auditable and provably disjoint.
struct KeyRange {
    std::uint64_t key_id = 0;
    std::uint64_t offset_bits = 0;
    std::uint64_t bits = 0;
};

struct KeyHandle {
    std::string pair_id;
    std::vector<KeyRange> ranges;
    std::uint64_t bits = 0;

    /// Deterministic opaque bytes for the reserved bits; not cryptographic.
    std::vector<std::uint8_t> material(std::uint64_t store_seed) const {
        std::vector<std::uint8_t> out;
        out.reserve((bits + 7) / 8);
        for (const auto& r : ranges) {
            Rng rng(store_seed ^ (r.key_id * 0x9e3779b97f4a7c15ull), r.offset_bits);
            std::uint64_t nbytes = (r.bits + 7) / 8;
            for (std::uint64_t i = 0; i < nbytes; ++i)
                out.push_back(static_cast<std::uint8_t>(rng.next_u32() & 0xff));
        }
        return out;
    }
};

struct KeyStoreStats {
    double generation_rate_bps = 0.0;
    double consumption_rate_bps = 0.0;
    std::uint64_t buffer_bits = 0;
    std::uint64_t starvation_events = 0;
};

/// Per-pair key buffer decoupling generation from consumption. Blocks are
/// consumed strictly FIFO and may be split; accounting is exact at bit
/// granularity.
class KeyStore {
public:
    explicit KeyStore(std::string pair_id = "", std::uint64_t seed = 0, double created_at = 0.0)
        : pair_id_(std::move(pair_id)), seed_(seed), created_at_(created_at) {}

    const std::string& pair_id() const { return pair_id_; }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t total_bits() const { return total_bits_; }
    std::uint64_t generated_bits() const { return generated_bits_; }
    std::uint64_t consumed_bits() const { return consumed_bits_; }
    std::uint64_t generated_count() const { return generated_count_; }
    std::uint64_t consumed_count() const { return consumed_count_; }
    std::uint64_t starvation_events() const { return starvation_events_; }
    const std::vector<AuditEntry>& audit_log() const { return audit_; }

    /// Appends a block; zero-bit pushes are rejected and leave the store
    /// untouched.
    bool push_key_block(std::uint64_t bits, double now) {
        if (bits == 0) return false;
        blocks_.push_back({next_key_id_++, bits, 0, now});
        total_bits_ += bits;
        generated_bits_ += bits;
        generated_count_ += 1;
        gen_events_.push_back({now, bits});
        audit_.push_back({now, pair_id_, "push", bits, total_bits_});
        return true;
    }

    /// FIFO reservation of exactly `bits`; std::nullopt (and a starve audit
    /// record) when the buffer cannot cover the request.
    std::optional<KeyHandle> reserve_key(std::uint64_t bits, double now) {
        if (bits == 0) throw ValidationError("reserve_key: bits must be > 0");
        if (bits > total_bits_) {
            starvation_events_ += 1;
            audit_.push_back({now, pair_id_, "starve", bits, total_bits_});
            return std::nullopt;
        }
        KeyHandle h;
        h.pair_id = pair_id_;
        h.bits = bits;
        std::uint64_t remaining = bits;
        while (remaining > 0) {
            Block& blk = blocks_.front();
            std::uint64_t avail = blk.bits - blk.consumed;
            std::uint64_t take = std::min(avail, remaining);
            h.ranges.push_back({blk.key_id, blk.consumed, take});
            blk.consumed += take;
            remaining -= take;
            if (blk.consumed == blk.bits) blocks_.pop_front();
        }
        total_bits_ -= bits;
        consumed_bits_ += bits;
        consumed_count_ += 1;
        use_events_.push_back({now, bits});
        audit_.push_back({now, pair_id_, "reserve", bits, total_bits_});
        return h;
    }

    /// Rates over a trailing window (bounded by the store's lifetime so a
    /// fresh store reads zero, not NaN).
    KeyStoreStats stats(double now, double window_s = 600.0) const {
        KeyStoreStats s;
        s.buffer_bits = total_bits_;
        s.starvation_events = starvation_events_;
        double horizon = std::min(window_s, now - created_at_);
        if (horizon <= 0.0) return s;
        auto rate = [&](const std::deque<Event>& ev) {
            std::uint64_t sum = 0;
            for (const auto& e : ev)
                if (e.t > now - horizon && e.t <= now) sum += e.bits;
            return static_cast<double>(sum) / horizon;
        };
        s.generation_rate_bps = rate(gen_events_);
        s.consumption_rate_bps = rate(use_events_);
        return s;
    }

private:
    struct Block {
        std::uint64_t key_id;
        std::uint64_t bits;
        std::uint64_t consumed;
        double created_at;
    };
    struct Event {
        double t;
        std::uint64_t bits;
    };

    std::string pair_id_;
    std::uint64_t seed_ = 0;
    double created_at_ = 0.0;
    std::deque<Block> blocks_;
    std::uint64_t next_key_id_ = 1;
    std::uint64_t total_bits_ = 0;
    std::uint64_t generated_bits_ = 0;
    std::uint64_t consumed_bits_ = 0;
    std::uint64_t generated_count_ = 0;
    std::uint64_t consumed_count_ = 0;
    std::uint64_t starvation_events_ = 0;
    std::deque<Event> gen_events_;
    std::deque<Event> use_events_;
    std::vector<AuditEntry> audit_;
};

enum class SessionState { Establishing, Generating, Stopped, Aborted };

inline std::string to_string(SessionState s) {
    switch (s) {
        case SessionState::Establishing: return "Establishing";
        case SessionState::Generating: return "Generating";
        case SessionState::Stopped: return "Stopped";
        case SessionState::Aborted: return "Aborted";
    }
    return "?";
}

/// One terminal pair generating keys over one route. Device authentication
/// and initial key distillation take 10 to 15 minutes, drawn per session from
/// the seed.
struct QkdSession {
    std::string pair_id;
    std::string route_signature;
    SessionState state = SessionState::Establishing;
    double established_at = 0.0;
    double warmup_s = 0.0;
    double report_interval_s = 120.0;

    double generating_at() const { return established_at + warmup_s; }
    double first_report_at() const { return generating_at() + report_interval_s; }
};

struct KeyRateReport {
    double qber_pct = 0.0;
    double skr_bps = 0.0;
    std::uint64_t bits_pushed = 0;
};

enum class TunnelState { Open, Starved, Closed };

inline std::string to_string(TunnelState s) {
    switch (s) {
        case TunnelState::Open: return "Open";
        case TunnelState::Starved: return "Starved";
        case TunnelState::Closed: return "Closed";
    }
    return "?";
}

/// Encrypted-tunnel consumer: draws one 256-bit key per rekey period,
/// starving (and later recovering) with the buffer.
struct Tunnel {
    std::string pair_id;
    double rekey_interval_s = 60.0;
    std::uint64_t key_bits_per_rekey = 256;
    TunnelState state = TunnelState::Closed;
    double next_rekey_s = 0.0;
    std::uint64_t rekeys = 0;
    std::uint64_t starvation_events = 0;
};

constexpr double kWarmupMinS = 600.0;
constexpr double kWarmupMaxS = 900.0;

/// Key management plane: per-pair stores and session agents. A pair is
/// identified by its endpoints ("src-dst"); the sender end must hold an
/// Alice terminal and the receiver end a Bob terminal.
class Kms {
public:
    explicit Kms(const Topology* topo = nullptr) : topo_(topo) {}

    static std::string pair_id(const std::string& src, const std::string& dst) {
        return src + "-" + dst;
    }

    KeyStore& store(const std::string& pair, double now = 0.0) {
        auto it = stores_.find(pair);
        if (it == stores_.end()) {
            std::uint64_t s = base_seed_;
            std::uint64_t h = hash_str(pair);
            it = stores_.emplace(pair, KeyStore(pair, splitmix64(h) ^ s, now)).first;
        }
        return it->second;
    }

    bool has_store(const std::string& pair) const { return stores_.count(pair) > 0; }
    const std::map<std::string, KeyStore>& stores() const { return stores_; }

    void set_base_seed(std::uint64_t seed) { base_seed_ = seed; }

    QkdSession& session_start(const std::string& src, const std::string& dst,
                              const std::string& route_signature, std::uint64_t seed,
                              double now) {
        if (topo_) {
            if (!topo_->node(src).has_device(DeviceKind::AliceTerminal))
                throw DeviceMismatchError("no Alice terminal at '" + src + "'");
            if (!topo_->node(dst).has_device(DeviceKind::BobTerminal))
                throw DeviceMismatchError("no Bob terminal at '" + dst + "'");
        }
        if (busy_.count({src, DeviceKind::AliceTerminal}))
            throw DeviceMismatchError("Alice terminal at '" + src + "' is already in a session");
        if (busy_.count({dst, DeviceKind::BobTerminal}))
            throw DeviceMismatchError("Bob terminal at '" + dst + "' is already in a session");

        std::string pair = pair_id(src, dst);
        QkdSession s;
        s.pair_id = pair;
        s.route_signature = route_signature;
        s.established_at = now;
        Rng warm(seed, hash_str(pair + route_signature));
        s.warmup_s = warm.uniform(kWarmupMinS, kWarmupMaxS);
        busy_.insert({src, DeviceKind::AliceTerminal});
        busy_.insert({dst, DeviceKind::BobTerminal});
        store(pair, now);
        sessions_[pair] = s;
        return sessions_[pair];
    }

    QkdSession* find_session(const std::string& pair) {
        auto it = sessions_.find(pair);
        return it == sessions_.end() ? nullptr : &it->second;
    }

    void mark_generating(const std::string& pair) {
        QkdSession* s = find_session(pair);
        if (s && s->state == SessionState::Establishing) s->state = SessionState::Generating;
    }

    /// Publishes one monitoring observation and banks skr * interval bits of
    /// fresh key (the reported rate taken as the interval mean).
    KeyRateReport session_report(const std::string& pair, const QkdLinkEstimate& est, Rng& rng,
                                 double now, double sigma_rel = 0.05) {
        QkdSession* s = find_session(pair);
        if (!s || s->state != SessionState::Generating)
            throw NotGeneratingError("session '" + pair + "' is not generating");
        Observation obs = sample_observation(est, rng, sigma_rel);
        KeyRateReport rep;
        rep.qber_pct = obs.qber_pct;
        rep.skr_bps = obs.skr_bps;
        rep.bits_pushed =
            static_cast<std::uint64_t>(std::floor(obs.skr_bps * s->report_interval_s));
        if (rep.bits_pushed > 0) store(pair, now).push_key_block(rep.bits_pushed, now);
        return rep;
    }

    void session_end(const std::string& pair, double now, bool aborted) {
        (void)now;
        QkdSession* s = find_session(pair);
        if (!s || s->state == SessionState::Stopped || s->state == SessionState::Aborted) return;
        s->state = aborted ? SessionState::Aborted : SessionState::Stopped;
        auto dash = pair.find('-');
        std::string src = pair.substr(0, dash), dst = pair.substr(dash + 1);
        busy_.erase({src, DeviceKind::AliceTerminal});
        busy_.erase({dst, DeviceKind::BobTerminal});
    }

    /// Advances a tunnel over its due rekey boundaries. A failed reservation
    /// starves the tunnel; it recovers on the next boundary the buffer can
    /// serve.
    void tunnel_tick(Tunnel& t, double now) {
        if (t.state == TunnelState::Closed) return;
        KeyStore& ks = store(t.pair_id, now);
        while (t.next_rekey_s <= now + 1e-9) {
            auto h = ks.reserve_key(t.key_bits_per_rekey, t.next_rekey_s);
            if (h) {
                t.state = TunnelState::Open;
                t.rekeys += 1;
            } else {
                t.state = TunnelState::Starved;
                t.starvation_events += 1;
            }
            t.next_rekey_s += t.rekey_interval_s;
        }
    }

    std::vector<AuditEntry> merged_audit() const {
        std::vector<AuditEntry> all;
        for (const auto& [pair, ks] : stores_)
            all.insert(all.end(), ks.audit_log().begin(), ks.audit_log().end());
        std::stable_sort(all.begin(), all.end(), [](const AuditEntry& a, const AuditEntry& b) {
            if (a.timestamp_s != b.timestamp_s) return a.timestamp_s < b.timestamp_s;
            return a.pair_id < b.pair_id;
        });
        return all;
    }

private:
    const Topology* topo_;
    std::map<std::string, KeyStore> stores_;
    std::map<std::string, QkdSession> sessions_;
    std::set<std::pair<std::string, DeviceKind>> busy_;
    std::uint64_t base_seed_ = 0;
};

} // namespace qkdnet
