// Acceptance suite: one check per release criterion, one pass/fail line each.
// Run via ctest or directly; exits non-zero if any criterion fails.

#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "qkdnet/calibration.hpp"
#include "qkdnet/engine.hpp"
#include "qkdnet/presets.hpp"

using namespace qkdnet;

namespace {

int g_failures = 0;

void criterion(int n, const std::string& desc, const std::function<bool(std::string&)>& body) {
    bool ok = false;
    std::string detail;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
        ok = false;
    }
    std::printf("[%s] criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", n, desc.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!ok) ++g_failures;
}

std::string data(const std::string& name) { return std::string(QKDNET_DATA_DIR) + "/" + name; }

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

Route fixture_route(const std::string& link) {
    if (link == "L1") return Route{{"N2", "N1"}, {"L1"}};
    if (link == "L2") return Route{{"N2", "N3"}, {"L2"}};
    if (link == "L3") return Route{{"N2", "N4"}, {"L3"}};
    if (link == "L4") return Route{{"N3", "N1"}, {"L4"}};
    if (link == "L1+L2") return Route{{"N3", "N2", "N1"}, {"L2", "L1"}};
    if (link == "L1+L3") return Route{{"N1", "N2", "N4"}, {"L1", "L3"}};
    throw ValidationError("no fixture route for " + link);
}

} // namespace

int main() {
    auto rows = parse_link_table_csv(read_text_file(data("table3.csv")));
    auto anchors = parse_anchors_json(read_text_file(data("anchors.json")));
    CalibratedParams cal = calibrate(rows, anchors);
    Topology topo = load_topology(read_text_file(data("metro4_topology.json")));
    ChannelPlan quiet;
    quiet.quantum_freq_thz = cal.physics.quantum_freq_thz;

    criterion(1, "loss decomposition reconstructs every budget within 0.3 dB",
              [&](std::string& detail) {
                  double hand_terminal = (5.19 - 2.0) + (5.70 - 2.0) - (7.44 - 3.0);
                  bool ok = near(hand_terminal, 2.45, 1e-9);
                  ok = ok && near(cal.decomposition.terminal_total_db, 2.45, 0.1);
                  double worst = cal.decomposition.max_abs_residual_db();
                  ok = ok && worst <= 0.3 && worst <= 0.2; // composites stay under 0.2
                  detail = "terminal " + num_str_fixed(cal.decomposition.terminal_total_db, 3) +
                           " dB, max |residual| " + num_str_fixed(worst, 3) + " dB";
                  return ok;
              });

    criterion(2, "calibrated QBER matches all twelve rows within 0.4 points",
              [&](std::string& detail) {
                  double worst = 0.0;
                  for (const auto& r : cal.rows)
                      worst = std::max(worst, std::fabs(qber_estimate(r.budget_db, 0.0,
                                                                      cal.physics.device) -
                                                        r.qber_pct));
                  detail = "max |error| " + num_str_fixed(worst, 3) + " pp";
                  return worst <= 0.4;
              });

    criterion(3, "calibrated SKR within 25% RMS / 40% max and ordered by budget",
              [&](std::string& detail) {
                  double sq = 0.0, worst = 0.0;
                  for (const auto& r : cal.rows) {
                      double rel = (r.fit_skr_bps - r.skr_bps) / r.skr_bps;
                      sq += rel * rel;
                      worst = std::max(worst, std::fabs(rel));
                  }
                  double rms = std::sqrt(sq / cal.rows.size());
                  bool ok = rms <= 0.25 && worst <= 0.40;

                  auto sorted = cal.rows;
                  std::sort(sorted.begin(), sorted.end(), [](const LinkRow& a, const LinkRow& b) {
                      return a.budget_db < b.budget_db;
                  });
                  for (std::size_t i = 1; i < sorted.size() && ok; ++i) {
                      ok = sorted[i].fit_skr_bps < sorted[i - 1].fit_skr_bps;
                      for (std::size_t j = 0; j < i && ok; ++j)
                          if (sorted[i].budget_db - sorted[j].budget_db >= 0.25)
                              ok = sorted[i].skr_bps < sorted[j].skr_bps;
                  }
                  detail = "rms " + num_str_fixed(rms, 3) + ", max " + num_str_fixed(worst, 3);
                  return ok;
              });

    criterion(4, "coexistence anchors hold on the fixture routes", [&](std::string& detail) {
        FilterSpec rx = cal.physics.receiver_filter();

        auto est = [&](const std::string& link, int nch, double dbm) {
            return estimate_link(topo, fixture_route(link), cal.lab_plan(nch, dbm), rx,
                                 cal.physics);
        };
        // (a) one quiet channel leaves the rate within five percent
        QkdLinkEstimate clean = estimate_link(topo, fixture_route("L1"), quiet, rx, cal.physics);
        QkdLinkEstimate low = est("L1", 1, 1.0);
        bool ok = std::fabs(low.skr_bps - clean.skr_bps) / clean.skr_bps < 0.05;
        // (b) full launch power on the longest-budget single link keeps going
        QkdLinkEstimate l4 = est("L4", 1, 9.0);
        ok = ok && !l4.aborted && l4.skr_bps >= 350.0;
        // (c) four channels at 7 dBm kill every single-span link
        for (const std::string link : {"L1", "L2", "L3", "L4"}) {
            QkdLinkEstimate e = est(link, 4, 7.0);
            ok = ok && e.qber_pct >= 6.0 && e.skr_bps == 0.0 && e.aborted;
        }
        // (d) four channels at 5 dBm kill both two-hop paths
        for (const std::string link : {"L1+L2", "L1+L3"}) {
            QkdLinkEstimate e = est(link, 4, 5.0);
            ok = ok && e.skr_bps == 0.0 && e.aborted;
        }
        detail = "L4@9dBm " + num_str_fixed(l4.skr_bps, 0) + " bps, drop@1dBm " +
                 num_str_fixed(100.0 * std::fabs(low.skr_bps - clean.skr_bps) / clean.skr_bps,
                               2) +
                 "%";
        return ok;
    });

    criterion(5, "field filter sweep holds to 725 GHz and dies at 750 GHz",
              [&](std::string& detail) {
                  SweepResult hpn = preset_filter_sweep(cal, "HPN-WTC");
                  SweepResult nsqi = preset_filter_sweep(cal, "NSQI-WTC");
                  bool ok = hpn.points.size() == nsqi.points.size();
                  double min_pass_skr = 1e18, max_pass_qber = 0.0;
                  for (std::size_t i = 0; i < hpn.points.size() && ok; ++i) {
                      const SweepPoint& h = hpn.points[i];
                      if (h.independent <= 725.0) {
                          ok = h.skr_bps >= 890.0 && h.qber_pct <= 2.8;
                          min_pass_skr = std::min(min_pass_skr, h.skr_bps);
                          max_pass_qber = std::max(max_pass_qber, h.qber_pct);
                      } else {
                          ok = h.skr_bps == 0.0 && h.qber_pct > 5.9;
                      }
                      ok = ok && nsqi.points[i].skr_bps <= h.skr_bps + 1e-9;
                  }
                  detail = "pass band min " + num_str_fixed(min_pass_skr, 0) + " bps / max " +
                           num_str_fixed(max_pass_qber, 2) + "%";
                  return ok;
              });

    criterion(6, "controller state machine stays legal over 1000 random report runs",
              [&](std::string& detail) {
                  auto allowed = [](ConnState f, ConnState t) {
                      using S = ConnState;
                      switch (f) {
                          case S::RouteSelected: return t == S::PathInstalled || t == S::Failed;
                          case S::PathInstalled: return t == S::QkdStarting || t == S::TornDown;
                          case S::QkdStarting: return t == S::Monitoring || t == S::TornDown;
                          case S::Monitoring:
                              return t == S::EncryptionActive || t == S::Rerouting ||
                                     t == S::TornDown;
                          case S::EncryptionActive:
                              return t == S::Rerouting || t == S::TornDown;
                          case S::Rerouting:
                              return t == S::PathInstalled || t == S::Failed || t == S::TornDown;
                          default: return false;
                      }
                  };
                  Rng rng(0xACCE97);
                  for (int episode = 0; episode < 1000; ++episode) {
                      Kms kms(&topo);
                      Controller ctrl(topo, kms);
                      ConnectionState& conn =
                          ctrl.handle_request({"N2", "N1", ConnKind::QuantumSecured, {}}, 0.0);
                      double now = 800.0;
                      int reports = 1 + static_cast<int>(rng.uniform01() * 14);
                      for (int i = 0; i < reports; ++i) {
                          if (conn.state == ConnState::Failed ||
                              conn.state == ConnState::TornDown)
                              break;
                          kms.mark_generating("N2-N1");
                          double q = rng.uniform(0.0, 12.0);
                          ctrl.on_qkd_report(conn.id,
                                             {q, q >= 6.0 ? 0.0 : rng.uniform(100.0, 2000.0)},
                                             now);
                          if (q >= 6.0) {
                              bool acted = conn.state == ConnState::Failed;
                              for (const auto& [t, st] : conn.history)
                                  if (st == ConnState::Rerouting && now - t <= 120.0)
                                      acted = true;
                              if (!acted) return false;
                          }
                          if (conn.state == ConnState::EncryptionActive &&
                              conn.last_report->qber_pct >= 6.0)
                              return false;
                          now += 120.0;
                      }
                      for (std::size_t i = 1; i < conn.history.size(); ++i)
                          if (!allowed(conn.history[i - 1].second, conn.history[i].second))
                              return false;
                      if (conn.state == ConnState::Failed && conn.tried_routes.size() != 5)
                          return false;
                  }
                  detail = "1000 episodes clean";
                  return true;
              });

    criterion(7, "identical seeds reproduce identical logs and reports",
              [&](std::string& detail) {
                  Scenario sc = load_scenario_file(data("scenarios/reroute_fault.json"));
                  RunResult a = SimEngine(sc, cal).run();
                  RunResult b = SimEngine(sc, cal).run();
                  bool ok = a.events_csv == b.events_csv &&
                            a.controller_csv == b.controller_csv &&
                            a.audit_csv == b.audit_csv && a.summary_csv == b.summary_csv;
                  detail = num_str(static_cast<long long>(a.events_csv.size())) +
                           " log bytes compared";
                  return ok;
              });

    criterion(8, "terminal-pair scaling: N switched vs N(N-1)/2 static",
              [&](std::string& detail) {
                  bool ok = min_qkd_pairs(4, PairingMode::StaticFullMesh) == 6 &&
                            min_qkd_pairs(4, PairingMode::Switched) == 4;
                  for (long long n = 1; n <= 10 && ok; ++n)
                      ok = min_qkd_pairs(n, PairingMode::Switched) == n &&
                           min_qkd_pairs(n, PairingMode::StaticFullMesh) == n * (n - 1) / 2;
                  detail = "N=1..10 checked";
                  return ok;
              });

    criterion(9, "key accounting is exact and starvation follows the rate balance",
              [&](std::string& detail) {
                  Rng rng(0x6e75);
                  for (int iter = 0; iter < 200; ++iter) {
                      KeyStore ks("P", iter, 0.0);
                      std::set<std::pair<std::uint64_t, std::uint64_t>> claimed;
                      double t = 0.0;
                      for (int op = 0; op < 150; ++op) {
                          t += rng.uniform(0.1, 3.0);
                          if (rng.uniform01() < 0.5) {
                              ks.push_key_block(
                                  1 + static_cast<std::uint64_t>(rng.uniform01() * 2048), t);
                          } else {
                              auto h = ks.reserve_key(
                                  1 + static_cast<std::uint64_t>(rng.uniform01() * 600), t);
                              if (h)
                                  for (const auto& r : h->ranges)
                                      for (std::uint64_t b = r.offset_bits;
                                           b < r.offset_bits + r.bits; b += 61)
                                          if (!claimed.insert({r.key_id, b}).second)
                                              return false; // double reservation
                          }
                          if (ks.generated_bits() - ks.consumed_bits() != ks.total_bits())
                              return false;
                      }
                  }

                  // constant-rate tunnel scenarios against the closed form
                  auto starves = [](double skr_bps, double rekey_s) {
                      Kms kms;
                      KeyStore& ks = kms.store("P", 0.0);
                      Tunnel tn;
                      tn.pair_id = "P";
                      tn.rekey_interval_s = rekey_s;
                      tn.state = TunnelState::Open;
                      std::uint64_t chunk =
                          static_cast<std::uint64_t>(std::floor(skr_bps * 120.0));
                      ks.push_key_block(chunk, 120.0);
                      tn.next_rekey_s = 120.0;
                      for (double now = 240.0; now <= 7200.0; now += 120.0) {
                          kms.tunnel_tick(tn, now - 1e-6);
                          ks.push_key_block(chunk, now);
                      }
                      return tn.starvation_events > 0;
                  };
                  bool ok = !starves(360.08, 1.0) && starves(360.08, 0.5) &&
                            !starves(500.0, 60.0) && starves(2.0, 60.0);
                  for (int iter = 0; iter < 40 && ok; ++iter) {
                      double intervals[] = {0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 60.0};
                      double interval = intervals[static_cast<int>(rng.uniform01() * 7)];
                      double skr = rng.uniform(50.0, 3000.0);
                      double needed = 256.0 / interval;
                      if (std::fabs(skr - needed) / needed < 0.05) continue;
                      ok = starves(skr, interval) == (skr < needed);
                  }
                  detail = "360.08 bps holds a 60 s and a 1 s rekey, not a 0.5 s rekey";
                  return ok;
              });

    criterion(10, "mixing products match brute force up to six channels",
              [&](std::string& detail) {
                  auto brute_count = [](const std::vector<double>& freqs) {
                      std::vector<double> uniq;
                      for (std::size_t i = 0; i < freqs.size(); ++i)
                          for (std::size_t j = 0; j < freqs.size(); ++j)
                              for (std::size_t k = 0; k < freqs.size(); ++k) {
                                  double p = freqs[i] + freqs[j] - freqs[k];
                                  bool seen = false;
                                  for (double u : uniq)
                                      if (std::fabs(u - p) <= 1e-6) seen = true;
                                  if (!seen) uniq.push_back(p);
                              }
                      return uniq.size();
                  };
                  Rng rng(0xF3);
                  bool ok = true;
                  for (int iter = 0; iter < 200 && ok; ++iter) {
                      int n = 1 + static_cast<int>(rng.uniform01() * 6);
                      std::vector<double> freqs;
                      for (int i = 0; i < n; ++i)
                          freqs.push_back(193.0 + 0.05 * static_cast<int>(rng.uniform01() * 20));
                      ok = fwm_products(freqs, 193.20).size() == brute_count(freqs);
                  }
                  auto products = fwm_products({193.35, 193.40, 193.45, 193.50}, 193.20);
                  bool flagged = false;
                  for (const auto& p : products)
                      if (std::fabs(p.product_freq_thz - 193.20) < 1e-6 && p.quantum_collision)
                          flagged = true;
                  ok = ok && flagged;
                  detail = "2x193.35-193.50 flagged on the quantum channel";
                  return ok;
              });

    std::printf("%s: %d criteria failed\n", g_failures == 0 ? "OK" : "FAILURES", g_failures);
    return g_failures == 0 ? 0 : 1;
}
