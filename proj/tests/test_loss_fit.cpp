#include <catch2/catch_amalgamated.hpp>

#include "qkdnet/calibration.hpp"
#include "qkdnet/loss_fit.hpp"
#include "qkdnet/rng.hpp"
#include "test_util.hpp"

using namespace qkdnet;
using Catch::Approx;

static std::vector<MeasuredBudget> table_budgets() {
    auto rows = parse_link_table_csv(read_file(data_path("table3.csv")));
    std::vector<MeasuredBudget> out;
    for (const auto& r : rows) out.push_back(r.measured());
    return out;
}

// Closed-form oracle over three rows: the single-link budgets L1 and L2 plus
// their composite pin the terminal lump exactly.
TEST_CASE("hand-solved terminal lump from L1, L2 and their composite") {
    double l1 = 5.19 - 2.0, l2 = 5.70 - 2.0, l12 = 7.44 - 3.0;
    double terminal = l1 + l2 - l12;
    CHECK(terminal == Approx(2.45).margin(1e-9));

    auto fit = fit_component_losses(table_budgets());
    CHECK(fit.terminal_total_db == Approx(terminal).margin(0.1));
}

TEST_CASE("full fit on the measured table") {
    auto fit = fit_component_losses(table_budgets());

    CHECK(fit.terminal_total_db == Approx(2.412222).margin(1e-4));
    CHECK(fit.span_loss_db.at("L1") == Approx(0.743333).margin(1e-4));
    CHECK(fit.span_loss_db.at("L2") == Approx(1.303333).margin(1e-4));
    CHECK(fit.span_loss_db.at("L3") == Approx(2.452222).margin(1e-4));
    CHECK(fit.span_loss_db.at("L4") == Approx(2.642222).margin(1e-4));
    CHECK(fit.oxc_db == 1.0);

    // every reconstructed budget stays close to its measurement
    CHECK(fit.max_abs_residual_db() <= 0.3);
    CHECK(fit.max_abs_residual_db() == Approx(0.0622).margin(5e-4));

    // rows whose span appears nowhere else are reproduced exactly
    for (const auto& row : table_budgets())
        if (row.link == "Back-to-Back" || row.link == "L5" || row.link == "L6")
            CHECK(fit.reconstruct(row) == Approx(row.budget_db).margin(1e-9));
}

TEST_CASE("synthetic budgets from a known decomposition are recovered exactly") {
    Rng rng(1234);
    for (int iter = 0; iter < 20; ++iter) {
        double terminal = rng.uniform(1.0, 4.0);
        std::vector<double> losses;
        for (int s = 0; s < 4; ++s) losses.push_back(rng.uniform(0.2, 3.0));

        std::vector<MeasuredBudget> rows;
        auto add = [&](std::vector<int> spans, int oxc) {
            MeasuredBudget r;
            r.n_cross_connects = oxc;
            r.budget_db = terminal + oxc * 1.0;
            for (int s : spans) {
                r.span_ids.push_back("S" + std::to_string(s));
                r.budget_db += losses[s];
            }
            r.link = "row" + std::to_string(rows.size());
            rows.push_back(r);
        };
        add({0}, 2);
        add({1}, 2);
        add({2}, 2);
        add({3}, 2);
        add({0, 1}, 3);
        add({0, 2}, 3);
        add({1, 3}, 3);

        auto fit = fit_component_losses(rows);
        CHECK(fit.terminal_total_db == Approx(terminal).margin(1e-9));
        for (int s = 0; s < 4; ++s)
            CHECK(fit.span_loss_db.at("S" + std::to_string(s)) == Approx(losses[s]).margin(1e-9));
        for (double r : fit.residuals_db) CHECK(std::fabs(r) < 1e-9);
    }
}

TEST_CASE("a single row cannot separate terminal from span loss") {
    std::vector<MeasuredBudget> rows{{"L1", {"L1"}, 2, 5.19}};
    REQUIRE_THROWS_AS(fit_component_losses(rows), UnderdeterminedError);
}

TEST_CASE("no rows at all is underdetermined") {
    REQUIRE_THROWS_AS(fit_component_losses({}), UnderdeterminedError);
}

TEST_CASE("applying a decomposition makes route_loss reproduce fitted budgets") {
    Topology topo = load_topology(read_file(data_path("metro4_topology.json")));
    auto budgets = table_budgets();
    auto fit = fit_component_losses(budgets);
    apply_decomposition(topo, fit);

    struct Case {
        const char* link;
        Route route;
    };
    std::vector<Case> cases{{"L1", Route{{"N2", "N1"}, {"L1"}}},
                            {"L3", Route{{"N2", "N4"}, {"L3"}}},
                            {"L1+L2", Route{{"N1", "N2", "N3"}, {"L1", "L2"}}}};
    for (const auto& c : cases) {
        MeasuredBudget row;
        for (const auto& r : budgets)
            if (r.link == c.link) row = r;
        CHECK(route_loss_db(topo, c.route) == Approx(fit.reconstruct(row)).margin(1e-9));
    }
}

TEST_CASE("fixture span losses match a fresh fit of the bundled table") {
    Topology topo = load_topology(read_file(data_path("metro4_topology.json")));
    auto fit = fit_component_losses(table_budgets());
    for (const auto& s : topo.spans)
        CHECK(s.loss_db() == Approx(fit.span_loss_db.at(s.id)).margin(5e-4));
    double tx = topo.node("N1").terminal_tx_loss_db;
    double rx = topo.node("N4").terminal_rx_loss_db;
    CHECK(tx + rx == Approx(fit.terminal_total_db).margin(1e-3));
}
