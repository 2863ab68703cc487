#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "qkdnet/qkd.hpp"
#include "qkdnet/rng.hpp"

using namespace qkdnet;
using Catch::Approx;

static QkdDeviceParams sample_device() {
    QkdDeviceParams d;
    d.base_qber_pct = 0.0;
    d.qber_loss_coeff = 0.368819;
    d.skr_ref_bps = 2032.39;
    d.skr_loss_exponent = 1.260803;
    d.skr_ref_loss_db = 4.99;
    d.ec_efficiency = 1.16;
    d.noise_qber_coeff = 1.1715e-11;
    return d;
}

TEST_CASE("binary entropy endpoints are exact") {
    CHECK(binary_entropy(0.0) == 0.0);
    CHECK(binary_entropy(1.0) == 0.0);
    CHECK(binary_entropy(0.5) == 1.0);
    CHECK(binary_entropy(0.11) == Approx(0.499916).margin(1e-5));
}

TEST_CASE("qber reduces to the intrinsic floor without loss or noise") {
    QkdDeviceParams d;
    d.base_qber_pct = 1.7;
    d.qber_loss_coeff = 0.0;
    CHECK(qber_estimate(0.0, 0.0, d) == 1.7);
}

TEST_CASE("qber saturates at the random-click limit under heavy noise") {
    QkdDeviceParams d = sample_device();
    CHECK(qber_estimate(5.0, 1e30, d) == 50.0);
}

TEST_CASE("qber grows with loss and noise") {
    Rng rng(77);
    for (int iter = 0; iter < 200; ++iter) {
        QkdDeviceParams d;
        d.base_qber_pct = rng.uniform(0.0, 2.0);
        d.qber_loss_coeff = rng.uniform(0.01, 1.0);
        d.noise_qber_coeff = rng.uniform(0.0, 1e-10);
        double l1 = rng.uniform(0.0, 9.0), l2 = l1 + rng.uniform(0.01, 3.0);
        double n1 = rng.uniform(0.0, 1e10), n2 = n1 + rng.uniform(1.0, 1e10);
        CHECK(qber_estimate(l1, n1, d) <= qber_estimate(l2, n1, d));
        CHECK(qber_estimate(l1, n1, d) <= qber_estimate(l1, n2, d));
    }
}

TEST_CASE("skr aborts exactly at the threshold") {
    QkdDeviceParams d = sample_device();
    CHECK(skr_estimate(5.0, 6.0, d) == 0.0);
    CHECK(skr_estimate(5.0, 6.5, d) == 0.0);
    CHECK(skr_estimate(5.0, 5.999, d) > 0.0);
}

TEST_CASE("skr is zero past the device power budget and at infinite loss") {
    QkdDeviceParams d = sample_device();
    CHECK(skr_estimate(10.01, 1.0, d) == 0.0);
    CHECK(skr_estimate(std::numeric_limits<double>::infinity(), 1.0, d) == 0.0);
    CHECK(skr_estimate(9.9, 1.0, d) > 0.0);
}

TEST_CASE("skr equals the reference rate at the reference point") {
    QkdDeviceParams d = sample_device();
    double q_ref = qber_estimate(d.skr_ref_loss_db, 0.0, d);
    CHECK(skr_estimate(d.skr_ref_loss_db, q_ref, d) == Approx(d.skr_ref_bps).epsilon(1e-12));
}

TEST_CASE("skr falls with loss and with qber") {
    Rng rng(78);
    for (int iter = 0; iter < 200; ++iter) {
        QkdDeviceParams d = sample_device();
        d.skr_loss_exponent = rng.uniform(1.0, 3.0);
        double l1 = rng.uniform(4.0, 9.0), l2 = l1 + rng.uniform(0.01, 1.0);
        double q1 = rng.uniform(0.1, 5.5), q2 = q1 + rng.uniform(0.01, 0.4);
        CHECK(skr_estimate(l2, q1, d) <= skr_estimate(l1, q1, d));
        CHECK(skr_estimate(l1, q2, d) <= skr_estimate(l1, q1, d));
    }
}

TEST_CASE("uncalibrated devices refuse to estimate") {
    QkdDeviceParams d; // skr_ref_bps left at zero
    REQUIRE_THROWS_AS(skr_estimate(5.0, 1.0, d), UncalibratedError);
}

TEST_CASE("estimate_link without classical channels is the bare pipeline") {
    PhysicsParams ph;
    ph.device = sample_device();
    ph.raman = {2e-9, 0.2};
    RouteGeometry g{{{0.5, 0.743333, 1}}, 2, 5.1556, 1.0};
    ChannelPlan quiet;

    QkdLinkEstimate est = estimate_link(g, quiet, ph.receiver_filter(), ph);
    CHECK(est.noise_rate == 0.0);
    CHECK(est.qber_pct == Approx(qber_estimate(g.budget_db, 0.0, ph.device)).margin(1e-12));
    CHECK(est.skr_bps == Approx(skr_estimate(g.budget_db, est.qber_pct, ph.device)).margin(1e-9));
    CHECK_FALSE(est.aborted);
}

TEST_CASE("aborted estimates carry zero rate") {
    PhysicsParams ph;
    ph.device = sample_device();
    RouteGeometry g{{{0.0, 9.0, 1}}, 2, 13.0, 1.0}; // past the 10 dB budget
    QkdLinkEstimate est = estimate_link(g, ChannelPlan{}, ph.receiver_filter(), ph);
    CHECK(est.aborted);
    CHECK(est.skr_bps == 0.0);
}

TEST_CASE("zero jitter reproduces the estimate exactly") {
    QkdLinkEstimate est;
    est.qber_pct = 2.5;
    est.skr_bps = 700.0;
    Rng rng(9);
    Observation obs = sample_observation(est, rng, 0.0);
    CHECK(obs.qber_pct == 2.5);
    CHECK(obs.skr_bps == 700.0);
}

TEST_CASE("observation sampling is deterministic in the generator state") {
    QkdLinkEstimate est;
    est.qber_pct = 2.5;
    est.skr_bps = 700.0;
    Rng a(4242), b(4242);
    for (int i = 0; i < 50; ++i) {
        Observation oa = sample_observation(est, a);
        Observation ob = sample_observation(est, b);
        CHECK(oa.qber_pct == ob.qber_pct);
        CHECK(oa.skr_bps == ob.skr_bps);
    }
}

TEST_CASE("sample mean converges to the estimate") {
    QkdLinkEstimate est;
    est.qber_pct = 2.5;
    est.skr_bps = 700.0;
    Rng rng(31415);
    double qsum = 0.0, ssum = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Observation o = sample_observation(est, rng, 0.05);
        qsum += o.qber_pct;
        ssum += o.skr_bps;
    }
    CHECK(qsum / n == Approx(est.qber_pct).epsilon(0.01));
    CHECK(ssum / n == Approx(est.skr_bps).epsilon(0.01));
}

TEST_CASE("aborted estimates sample at or above the threshold with zero rate") {
    QkdLinkEstimate est;
    est.qber_pct = 7.0;
    est.skr_bps = 0.0;
    est.aborted = true;
    Rng rng(5150);
    for (int i = 0; i < 200; ++i) {
        Observation o = sample_observation(est, rng);
        CHECK(o.qber_pct >= 6.0);
        CHECK(o.skr_bps == 0.0);
    }
}
