#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "seqsense/calibration.hpp"
#include "seqsense/fusion.hpp"
#include "seqsense/harness.hpp"
#include "test_util.hpp"

using namespace seqsense;

namespace {

SchemeConfig make_cfg(Scheme scheme, int s_bits, double delta, double phi, double a, double b,
                      int period = 4) {
    SchemeConfig cfg;
    cfg.scheme = scheme;
    cfg.s_bits = s_bits;
    cfg.period = period;
    cfg.delta = delta;
    cfg.phi = phi;
    cfg.thresholds = {a, b};
    return cfg;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("centralized_step: threshold exits and continuation") {
    SprtThresholds thr{2.0, 2.0};
    SUBCASE("two unit increments stop with H1") {
        FusionState st;
        CHECK_FALSE(centralized_step(st, thr, 1, 1.0).has_value());
        const auto v = centralized_step(st, thr, 2, 1.0);
        REQUIRE(v.has_value());
        CHECK(v->decision == Hypothesis::H1);
        CHECK(v->stop_time == 2);
    }
    SUBCASE("a single overshooting negative increment stops with H0") {
        FusionState st;
        const auto v = centralized_step(st, thr, 1, -3.0);
        REQUIRE(v.has_value());
        CHECK(v->decision == Hypothesis::H0);
        CHECK(v->stop_time == 1);
        CHECK(st.llr == -3.0);
    }
    SUBCASE("alternating half steps never stop") {
        FusionState st;
        for (int t = 1; t <= 200; ++t)
            CHECK_FALSE(centralized_step(st, thr, t, t % 2 ? 0.5 : -0.5).has_value());
    }
}

TEST_CASE("qsprt_step: synchronous batch updates") {
    SprtThresholds thr{1.5, 1.5};
    SUBCASE("K window values sum into one update") {
        FusionState st;
        const double w[] = {1.0, 1.0};
        const auto v = qsprt_step(st, thr, 4, 4, w);
        REQUIRE(v.has_value());
        CHECK(v->decision == Hypothesis::H1);
        CHECK(st.llr == 2.0);
        CHECK(st.message_count == 2);
    }
    SUBCASE("cancelling windows continue") {
        FusionState st;
        const double w[] = {1.0, -1.0};
        CHECK_FALSE(qsprt_step(st, thr, 4, 4, w).has_value());
        CHECK(st.llr == 0.0);
    }
    SUBCASE("message count grows by K per period") {
        FusionState st;
        const double w[] = {0.1, -0.1, 0.05};
        for (int m = 1; m <= 5; ++m) (void)qsprt_step(st, thr, 4, 4 * m, w);
        CHECK(st.message_count == 15);
    }
    SUBCASE("off-period call is an error") {
        FusionState st;
        const double w[] = {0.0};
        CHECK_THROWS_AS((void)qsprt_step(st, thr, 4, 5, w), std::logic_error);
    }
}

TEST_CASE("rlt_step: asynchronous single-message updates") {
    const double delta = 1.0, phi = 2.0;
    SUBCASE("1-bit messages accumulate on the delta lattice") {
        FusionState st;
        SprtThresholds thr{2.0, 2.0};
        const SuMessage m1{1, 0, +1, 0};
        CHECK_FALSE(rlt_step(st, thr, delta, phi, 0, 1, {&m1, 1}).has_value());
        CHECK(st.llr == 1.0);
        const SuMessage m2{3, 1, +1, 0};
        const auto v = rlt_step(st, thr, delta, phi, 0, 3, {&m2, 1});
        REQUIRE(v.has_value());
        CHECK(v->decision == Hypothesis::H1);
        CHECK(v->stop_time == 3);
        CHECK(st.llr == 2.0);
    }
    SUBCASE("simultaneous arrivals: ascending SU order, first exit discards the rest") {
        FusionState st;
        SprtThresholds thr{5.0, 2.0};
        const SuMessage first{1, 0, -1, 0};
        (void)rlt_step(st, thr, delta, phi, 0, 1, {&first, 1});
        CHECK(st.llr == -1.0);
        const SuMessage batch[] = {{2, 0, -1, 0}, {2, 1, +1, 0}};
        const auto v = rlt_step(st, thr, delta, phi, 0, 2, batch);
        REQUIRE(v.has_value());
        CHECK(v->decision == Hypothesis::H0);
        CHECK(st.llr == -2.0);        // SU 1's +1 was never applied
        CHECK(st.message_count == 2);  // one from t=1, one processed at t=2
    }
    SUBCASE("no messages leave the statistic constant") {
        FusionState st;
        SprtThresholds thr{1.0, 1.0};
        CHECK_FALSE(rlt_step(st, thr, delta, phi, 0, 7, {}).has_value());
        CHECK(st.llr == 0.0);
        CHECK(st.time == 7);
    }
    SUBCASE("quantized levels reconstruct through the FC update") {
        FusionState st;
        SprtThresholds thr{10.0, 10.0};
        const SuMessage m{1, 0, -1, 2};
        (void)rlt_step(st, thr, delta, phi, 4, 1, {&m, 1});
        CHECK(st.llr == -2.0);  // -(1 + 2 * 2/4)
    }
}

TEST_CASE("run_scheme: deterministic stub walks") {
    const DetectorModel stub = ConstantLlrParams{1.0};
    SUBCASE("centralized, A = 5") {
        const auto cfg = make_cfg(Scheme::Centralized, 1, 1.0, 1.0, 5.0, 5.0);
        const auto r = run_scheme(cfg, {&stub, 1}, Hypothesis::H1, 1000, 7);
        CHECK(r.decision == Hypothesis::H1);
        CHECK(r.stop_time == 5);
        CHECK(r.message_count == 5);
        CHECK(r.centralized_llr_at_stop == 5.0);
        CHECK_FALSE(r.censored);
    }
    SUBCASE("1-bit RLT, delta = 1, A = 5, K = 1") {
        const auto cfg = make_cfg(Scheme::RltSprt, 1, 1.0, 1.0, 5.0, 5.0);
        const auto r = run_scheme(cfg, {&stub, 1}, Hypothesis::H1, 1000, 7);
        CHECK(r.decision == Hypothesis::H1);
        CHECK(r.stop_time == 5);
        CHECK(r.message_count == 5);
        CHECK(r.bits_sent == 5);  // one bit per message in 1-bit mode
    }
    SUBCASE("horizon exhaustion censors") {
        const DetectorModel slow = ConstantLlrParams{0.01};
        const auto cfg = make_cfg(Scheme::Centralized, 1, 1.0, 1.0, 50.0, 50.0);
        const auto r = run_scheme(cfg, {&slow, 1}, Hypothesis::H0, 40, 7);
        CHECK_FALSE(r.decision.has_value());
        CHECK(r.censored);
        CHECK(r.stop_time == 40);
    }
}

TEST_CASE("run_scheme: Bernoulli walk matches exhaustive path enumeration") {
    // Unit-scale oracle: 2^12 paths, A = B = 2, horizon 12.
    const auto oracle = testing::enumerate_bernoulli_walk(1.0, 2.0, 2.0, 12);
    const DetectorModel model = BernoulliLlrParams{1.0};
    const auto cfg = make_cfg(Scheme::Centralized, 1, 1.0, 1.0, 2.0, 2.0);
    const int64_t n = 30000;
    for (Hypothesis hyp : {Hypothesis::H0, Hypothesis::H1}) {
        RunningStat delay;
        int64_t wrong = 0, decided = 0;
        std::vector<double> pmf(13, 0.0);
        for (int64_t i = 0; i < n; ++i) {
            const auto r = run_scheme(cfg, {&model, 1}, hyp, 12, derive_seed(99, {static_cast<uint64_t>(hyp), static_cast<uint64_t>(i)}));
            if (r.censored) continue;
            ++decided;
            delay.add(static_cast<double>(r.stop_time));
            pmf[static_cast<size_t>(r.stop_time)] += 1.0;
            wrong += r.decision == opposite(hyp);
        }
        const auto& exact_pmf =
            hyp == Hypothesis::H0 ? oracle.stop_pmf_h0 : oracle.stop_pmf_h1;
        const double exact_err = hyp == Hypothesis::H0 ? oracle.alpha : oracle.beta;
        const double exact_delay =
            hyp == Hypothesis::H0 ? oracle.mean_delay_h0 : oracle.mean_delay_h1;
        const double err_hat = static_cast<double>(wrong) / static_cast<double>(decided);
        CHECK(std::abs(err_hat - exact_err) <= 3.0 * testing::binomial_se(exact_err, decided));
        CHECK(std::abs(delay.mean - exact_delay) <= 3.0 * delay.standard_error());
        const double stopped_mass =
            1.0 - (hyp == Hypothesis::H0 ? oracle.censored_h0 : oracle.censored_h1);
        for (int t = 1; t <= 12; ++t) {
            const double p_exact = exact_pmf[static_cast<size_t>(t)] / stopped_mass;
            const double p_hat = pmf[static_cast<size_t>(t)] / decided;
            CHECK(std::abs(p_hat - p_exact) <=
                  3.0 * testing::binomial_se(p_exact, decided) + 1e-9);
        }
    }
}

TEST_CASE("1-bit RLT keeps the FC statistic on the delta lattice") {
    const double delta = 1.746;
    auto cfg = make_cfg(Scheme::RltSprt, 1, delta, 7.7, 8.0, 8.0);
    const std::vector<DetectorModel> models(2, GaussianDetectorParams{1.0, 1.0});
    for (uint64_t seed = 0; seed < 30; ++seed) {
        const auto path = record_fc_path(cfg, models, Hypothesis::H1, 5000, seed);
        for (const auto& ev : path.events) {
            const double k = std::round(ev.fc_llr / delta);
            CHECK(ev.fc_llr == k * delta);  // bit-exact: the FC sums sign bits
        }
    }
}

TEST_CASE("Wald bound direction on the Bernoulli lattice walk") {
    const DetectorModel model = BernoulliLlrParams{1.0};
    const auto cfg = make_cfg(Scheme::Centralized, 1, 1.0, 1.0, 3.0, 3.0);
    int64_t wrong = 0, n = 20000;
    for (int64_t i = 0; i < n; ++i) {
        const auto r = run_scheme(cfg, {&model, 1}, Hypothesis::H0, 2000, 1000 + i);
        wrong += r.decision == Hypothesis::H1;
    }
    const double alpha_hat = static_cast<double>(wrong) / static_cast<double>(n);
    const double bound = std::exp(-3.0);
    CHECK(alpha_hat <= bound + 3.0 * testing::binomial_se(bound, n));
}

TEST_CASE("RLT overshoot at the FC is bounded by the last update") {
    const std::vector<DetectorModel> models(2, GaussianDetectorParams{1.0, 1.0});
    auto cfg = make_cfg(Scheme::RltSprt, 2, 1.746, 7.7, 6.0, 6.0);
    const int k_phi = 2;
    for (uint64_t seed = 0; seed < 200; ++seed) {
        const auto r = run_scheme(cfg, models, Hypothesis::H1, 100000, seed);
        if (r.censored) continue;
        // replay the statistic magnitude at the stop from a fresh record
        const auto path = record_fc_path(cfg, models, Hypothesis::H1, 100000, seed);
        const auto rr = replay_path(path, cfg.thresholds, cfg.bits_per_message());
        CHECK(rr == r);
    }
    // statistic magnitude bound: threshold + K * phi
    auto wide = cfg;
    wide.thresholds = {6.0, 6.0};
    for (uint64_t seed = 0; seed < 200; ++seed) {
        const auto path = record_fc_path(wide, models, Hypothesis::H0, 100000, seed);
        if (!path.exited) continue;
        const double final_llr = path.events.back().fc_llr;
        CHECK(std::abs(final_llr) <= 6.0 + k_phi * wide.phi);
    }
}

TEST_CASE("determinism: identical seed and config give identical results") {
    const std::vector<DetectorModel> models(2, GaussianDetectorParams{1.0, 1.0});
    for (Scheme scheme : {Scheme::Centralized, Scheme::QSprt, Scheme::RltSprt}) {
        const auto cfg = make_cfg(scheme, 2, 1.746, 7.7, 4.0, 4.0);
        const auto a = run_scheme(cfg, models, Hypothesis::H1, 100000, 424242);
        const auto b = run_scheme(cfg, models, Hypothesis::H1, 100000, 424242);
        CHECK(a == b);
        const auto c = run_scheme(cfg, models, Hypothesis::H1, 100000, 424243);
        CHECK(a != c);
    }
}

TEST_CASE("path replay is bit-identical to direct simulation at any inner thresholds") {
    const std::vector<DetectorModel> models{GaussianDetectorParams{1.0, 1.0},
                                            EnergyDetectorParams{4.0}};
    for (Scheme scheme : {Scheme::Centralized, Scheme::QSprt, Scheme::RltSprt}) {
        CAPTURE(static_cast<int>(scheme));
        auto cfg = make_cfg(scheme, 2, 1.5, 9.0, 9.0, 9.0);
        PathEnsemble ens(cfg, models, Hypothesis::H1, 40, 100000, 777, 5, 1);
        ens.ensure_bounds(9.0, 9.0);
        Rng pick(3);
        for (int rep = 0; rep < 20; ++rep) {
            const SprtThresholds thr{0.5 + 8.0 * pick.uniform(), 0.5 + 8.0 * pick.uniform()};
            auto direct_cfg = cfg;
            direct_cfg.thresholds = thr;
            for (int64_t i = 0; i < ens.size(); ++i) {
                const auto direct =
                    run_scheme(direct_cfg, models, Hypothesis::H1, 100000, ens.trial_seed(i));
                CHECK(ens.replay(i, thr) == direct);
            }
        }
    }
    SUBCASE("censored trials replay identically too") {
        auto cfg = make_cfg(Scheme::Centralized, 1, 1.0, 1.0, 40.0, 40.0);
        PathEnsemble ens(cfg, models, Hypothesis::H0, 30, 25, 778, 6, 1);  // short horizon
        ens.ensure_bounds(40.0, 40.0);
        int censored_seen = 0;
        for (int64_t i = 0; i < ens.size(); ++i) {
            const auto direct = run_scheme(cfg, models, Hypothesis::H0, 25, ens.trial_seed(i));
            const auto replayed = ens.replay(i, cfg.thresholds);
            CHECK(replayed == direct);
            censored_seen += direct.censored;
        }
        CHECK(censored_seen > 0);  // the horizon is short enough to censor
    }
}

TEST_CASE("message and bit accounting identities") {
    const std::vector<DetectorModel> models(2, GaussianDetectorParams{1.0, 1.0});
    SUBCASE("Q-SPRT: message_count = K * stop_time / T exactly") {
        const auto cfg = make_cfg(Scheme::QSprt, 3, 1.746, 7.7, 5.0, 5.0, 4);
        for (uint64_t seed = 0; seed < 100; ++seed) {
            const auto r = run_scheme(cfg, models, Hypothesis::H1, 100000, seed);
            CHECK(r.stop_time % 4 == 0);  // stop times are multiples of the period
            CHECK(r.message_count == 2 * (r.stop_time / 4));
            CHECK(r.bits_sent == r.message_count * 3);
        }
    }
    SUBCASE("RLT: bits_sent = message_count * (1 + ceil(log2(1 + r_hat)))") {
        for (int s : {1, 2, 4, 16}) {
            auto cfg = make_cfg(Scheme::RltSprt, s, 1.746, 7.7, 5.0, 5.0);
            const auto r = run_scheme(cfg, models, Hypothesis::H1, 100000, 11);
            CHECK(r.bits_sent == r.message_count * message_bits(cfg.r_hat()));
            CHECK(message_bits(cfg.r_hat()) == s);
        }
    }
}

TEST_CASE("stopping correctness: decision is H1 iff the final statistic reached A") {
    const std::vector<DetectorModel> models(2, GaussianDetectorParams{1.0, 1.0});
    for (Scheme scheme : {Scheme::Centralized, Scheme::QSprt, Scheme::RltSprt}) {
        const auto cfg = make_cfg(scheme, 2, 1.746, 7.7, 4.5, 3.5);
        for (uint64_t seed = 100; seed < 160; ++seed) {
            const auto path = record_fc_path(cfg, models, Hypothesis::H1, 100000, seed);
            const auto r = replay_path(path, cfg.thresholds, cfg.bits_per_message());
            if (r.censored) continue;
            bool found = false;
            for (const auto& ev : path.events) {
                if (ev.time > r.stop_time) break;
                if (ev.fc_llr >= 4.5 || ev.fc_llr <= -3.5) {
                    CHECK((ev.fc_llr >= 4.5) == (r.decision == Hypothesis::H1));
                    found = true;
                    break;
                }
            }
            CHECK(found);
        }
    }
}

TEST_CASE("scheme names round-trip") {
    for (Scheme s : {Scheme::Centralized, Scheme::QSprt, Scheme::RltSprt})
        CHECK(scheme_from_name(scheme_name(s)) == s);
    CHECK_FALSE(scheme_from_name("d-sprt").has_value());
}

}  // TEST_SUITE
