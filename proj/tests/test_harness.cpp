#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "seqsense/config.hpp"
#include "seqsense/harness.hpp"
#include "test_util.hpp"

using namespace seqsense;

namespace {

ManifestEntry stub_entry(const ExperimentPoint& p, int period, double a, double b,
                         double delta = 1.0, double phi = 1.0) {
    ManifestEntry e;
    e.scheme = std::string(scheme_name(p.scheme.scheme));
    e.s_bits = p.scheme.s_bits;
    e.period = period;
    e.k_users = p.k_users;
    e.models = p.models;
    e.target_alpha = p.target_alpha;
    e.target_beta = p.target_beta;
    e.target_delay_h0 = p.target_delay_h0;
    e.target_delay_h1 = p.target_delay_h1;
    e.delta = delta;
    e.phi = phi;
    e.a = a;
    e.b = b;
    return e;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("run_experiment: deterministic stub gives delay 5 with zero spread") {
    ExperimentConfig cfg;
    cfg.k_users = 1;
    cfg.models = {ConstantLlrParams{1.0}};
    cfg.schemes = {{Scheme::Centralized, 0}};
    cfg.targets = {{0.01, 0.01}};
    cfg.n_trials = 100;
    cfg.horizon = 50;
    CalibrationManifest manifest;
    manifest.entries.push_back(
        stub_entry(experiment_points(cfg, SweepFamily::ErrorGrid)[0], cfg.period, 5.0, 5.0));
    const auto s = run_experiment(cfg, manifest, SweepFamily::ErrorGrid, 1, 2);
    REQUIRE(s.rows.size() == 2);
    for (const auto& row : s.rows) {
        CHECK(row.mean_delay == 5.0);
        CHECK(row.se_delay == 0.0);
        CHECK(row.censored_frac == 0.0);
        CHECK(row.msg_rate == 1.0);
        CHECK(row.n_trials == 100);
    }
    // the constant walk always climbs, so H0 rows count every trial as wrong
    CHECK(s.rows[0].err_direct == 1.0);
    CHECK(s.rows[1].err_direct == 0.0);
}

TEST_CASE("run_experiment: missing manifest entry is a config error") {
    ExperimentConfig cfg;
    cfg.k_users = 1;
    cfg.models = {ConstantLlrParams{1.0}};
    cfg.schemes = {{Scheme::Centralized, 0}};
    cfg.targets = {{0.01, 0.01}};
    CalibrationManifest empty;
    CHECK_THROWS_AS((void)run_experiment(cfg, empty, SweepFamily::ErrorGrid, 1, 1),
                    ConfigError);
}

TEST_CASE("estimate_error_importance") {
    SUBCASE("no trial decides the trial hypothesis: estimate is exactly zero") {
        std::vector<TrialResult> trials(10);
        for (auto& t : trials) {
            t.decision = Hypothesis::H0;
            t.centralized_llr_at_stop = -3.0;
        }
        const auto est = estimate_error_importance(trials, Hypothesis::H1);
        CHECK(est.value == 0.0);
    }
    SUBCASE("threshold exit caps every weight at e^-A") {
        std::vector<TrialResult> trials(50);
        Rng rng(1);
        for (auto& t : trials) {
            t.decision = Hypothesis::H1;
            t.centralized_llr_at_stop = 3.0 + rng.uniform();  // L >= A at an H1 exit
        }
        const auto est = estimate_error_importance(trials, Hypothesis::H1);
        CHECK(est.value <= std::exp(-3.0));
        CHECK(est.value > 0.0);
    }
    SUBCASE("censored trials enter as zero-weight terms") {
        std::vector<TrialResult> trials(4);
        trials[0].decision = Hypothesis::H1;
        trials[0].centralized_llr_at_stop = 3.0;
        for (int i = 1; i < 4; ++i) trials[static_cast<size_t>(i)].censored = true;
        const auto est = estimate_error_importance(trials, Hypothesis::H1);
        CHECK(est.value == doctest::Approx(std::exp(-3.0) / 4.0).epsilon(1e-14));
    }
}

TEST_CASE("importance sampling agrees with enumeration and direct counting") {
    const auto oracle = testing::enumerate_bernoulli_walk(1.0, 3.0, 3.0, 20);
    SchemeConfig sc;
    sc.scheme = Scheme::Centralized;
    sc.thresholds = {3.0, 3.0};
    const std::vector<DetectorModel> models{BernoulliLlrParams{1.0}};
    const int64_t n = 20000;
    const auto h1 = run_trial_batch(sc, models, Hypothesis::H1, n, 20, 909, 4);
    const auto h0 = run_trial_batch(sc, models, Hypothesis::H0, n, 20, 909, 4);

    const auto alpha_is = estimate_error_importance(h1, Hypothesis::H1);
    CHECK(std::abs(alpha_is.value - oracle.alpha) <= 3.0 * alpha_is.se);

    const auto alpha_direct = estimate_error_direct(h0, Hypothesis::H0);
    CHECK(std::abs(alpha_is.value - alpha_direct.value) <=
          3.0 * combined_se(alpha_is.se, alpha_direct.se));

    const auto beta_is = estimate_error_importance(h0, Hypothesis::H0);
    CHECK(std::abs(beta_is.value - oracle.beta) <= 3.0 * beta_is.se);
}

TEST_CASE("experiment_points: families expand their grids") {
    ExperimentConfig cfg;
    cfg.k_users = 2;
    cfg.models = {EnergyDetectorParams{4.0}};
    cfg.schemes = {{Scheme::Centralized, 0}, {Scheme::RltSprt, 1}, {Scheme::QSprt, 1}};
    cfg.targets = {{1e-1, 1e-1}, {1e-2, 1e-2}, {1e-3, 1e-3}};
    cfg.snr_db = {0.0, 5.0};
    cfg.k_grid = {1, 2, 4, 8};
    cfg.delay_pairs = {{30.0, 25.0}};

    CHECK(experiment_points(cfg, SweepFamily::ErrorGrid).size() == 9);
    CHECK(experiment_points(cfg, SweepFamily::KGrid).size() == 12);
    CHECK(experiment_points(cfg, SweepFamily::OcCurve).size() == 3);

    const auto snr = experiment_points(cfg, SweepFamily::SnrGrid);
    REQUIRE(snr.size() == 6);
    const auto& m5 = std::get<EnergyDetectorParams>(snr[1].models[0]);
    CHECK(m5.theta == doctest::Approx(2.0 * std::pow(10.0, 0.5)));

    SUBCASE("snr mapping for gaussian scales rho2 over sigma_w2") {
        cfg.models = {GaussianDetectorParams{0.5, 2.0}};
        const auto pts = experiment_points(cfg, SweepFamily::SnrGrid);
        const auto& g = std::get<GaussianDetectorParams>(pts[1].models[0]);
        CHECK(g.rho2 == doctest::Approx(2.0 * std::pow(10.0, 0.5)));
        CHECK(g.sigma_w2 == 2.0);
    }
    SUBCASE("snr mapping rejects the spectral model") {
        cfg.models = {SpectralShapeParams{{0.5}, 1.0, 0.75}};
        CHECK_THROWS_AS((void)experiment_points(cfg, SweepFamily::SnrGrid), ConfigError);
    }
    SUBCASE("k-grid needs a single template model") {
        cfg.models = {EnergyDetectorParams{4.0}, EnergyDetectorParams{2.0}};
        CHECK_THROWS_AS((void)experiment_points(cfg, SweepFamily::KGrid), ConfigError);
    }
}

TEST_CASE("csv output: pinned header, shape, and byte-identical reruns") {
    CHECK(csv_header() ==
          "scheme,s_bits,T,K,hyp,target_alpha,target_beta,A,B,delta,mean_delay,se_delay,"
          "err_direct,se_err_direct,err_is,se_err_is,msg_rate,censored_frac,n_trials,seed");

    ExperimentConfig cfg;
    cfg.k_users = 2;
    cfg.models = {BernoulliLlrParams{1.0}};
    cfg.schemes = {{Scheme::Centralized, 0}, {Scheme::QSprt, 1}, {Scheme::RltSprt, 1}};
    cfg.targets = {{1e-1, 1e-1}, {5e-2, 5e-2}, {2e-2, 2e-2}};
    cfg.n_trials = 400;
    cfg.horizon = 20000;
    CalibrationManifest manifest;
    for (const auto& p : experiment_points(cfg, SweepFamily::ErrorGrid))
        manifest.entries.push_back(stub_entry(p, cfg.period, 3.0, 3.0));

    const auto dir = std::filesystem::temp_directory_path() / "seqsense_sweep_test";
    std::filesystem::remove_all(dir);
    const auto paths_a = sweep(cfg, manifest, SweepFamily::ErrorGrid, (dir / "a").string(),
                               kDefaultSeed, 4);
    const auto paths_b = sweep(cfg, manifest, SweepFamily::ErrorGrid, (dir / "b").string(),
                               kDefaultSeed, 1);
    REQUIRE(paths_a.size() == 1);
    CHECK(paths_a[0].ends_with("error_grid.csv"));
    const std::string csv_a = read_file(paths_a[0]);
    CHECK(csv_a == read_file(paths_b[0]));  // same seed, different worker count

    // 3 schemes x 3 targets, H1 rows only: 9 data rows
    CHECK(std::count(csv_a.begin(), csv_a.end(), '\n') == 10);
    CHECK(csv_a.starts_with(csv_header()));
    std::filesystem::remove_all(dir);
}

TEST_CASE("low SNR: 1-bit level-triggered sampling beats 1-bit uniform sampling") {
    // Energy detector at -3 dB; the asynchronous scheme keeps most of the
    // sampled LLR while the 1-bit window quantizer discards nearly all of it.
    const std::vector<DetectorModel> models(
        2, EnergyDetectorParams{2.0 * std::pow(10.0, -0.3)});
    const auto constants = pooled_constants(models, 4, DeltaKl::H1, 150000, 1e-4, 17);
    auto make = [&](Scheme scheme, int s_bits) {
        SchemeConfig sc;
        sc.scheme = scheme;
        sc.s_bits = s_bits;
        sc.period = 4;
        sc.delta = constants.delta;
        sc.phi = constants.phi;
        return calibrate_thresholds(sc, models, 1e-2, 1e-2, 10000, 1000000, 18, 4);
    };
    const auto rlt1 = make(Scheme::RltSprt, 1);
    const auto q1 = make(Scheme::QSprt, 1);
    CHECK(rlt1.mean_delay_h1 + 3.0 * combined_se(rlt1.se_delay_h1, q1.se_delay_h1) <
          q1.mean_delay_h1);
}

TEST_CASE("config parsing: happy path") {
    const std::string text = R"({
      "k_users": 2,
      "models": [{"type": "gaussian", "rho2": 1.0, "sigma_w2": 1.0}],
      "schemes": [{"scheme": "centralized"}, {"scheme": "rlt", "s_bits": 1}],
      "period": 4,
      "targets": [{"alpha": 1e-2, "beta": 1e-2}],
      "snr_db": [0, 5],
      "k_grid": [1, 2, 4],
      "delay_pairs": [{"h0": 30.0, "h1": 25.0}],
      "n_trials": 10000,
      "horizon": 100000,
      "seed": 77,
      "constants_samples": 150000,
      "phi_quantile": 1e-4,
      "delta_kl": "h1"
    })";
    const auto cfg = parse_experiment_config(text);
    CHECK(cfg.k_users == 2);
    CHECK(cfg.models.size() == 1);
    CHECK(cfg.schemes.size() == 2);
    CHECK(cfg.schemes[1].s_bits == 1);
    CHECK(cfg.targets.size() == 1);
    CHECK(cfg.seed == uint64_t{77});
    CHECK(cfg.delay_pairs[0].second == 25.0);
    CHECK(cfg.delta_kl == DeltaKl::H1);
}

TEST_CASE("config parsing: schema violations name the offending key") {
    using doctest::Contains;
    auto message_of = [](const std::string& text) -> std::string {
        try {
            (void)parse_experiment_config(text);
        } catch (const ConfigError& e) {
            return e.what();
        }
        return "";
    };
    const std::string base = R"({"k_users": 1,
      "models": [{"type": "constant", "value": 1.0}],
      "schemes": [{"scheme": "centralized"}],
      "period": 4, "targets": [], "n_trials": 100})";
    CHECK_NOTHROW((void)parse_experiment_config(base));

    CHECK(message_of("{") != "");
    CHECK(message_of(R"({"k_users": 1})").find("missing required key") != std::string::npos);
    CHECK_MESSAGE(message_of(R"({"k_users": 1, "modles": []})").find("modles") !=
                      std::string::npos,
                  "unknown keys are rejected");
    CHECK(message_of(R"({"k_users": 1,
      "models": [{"type": "constant", "value": 1.0}],
      "schemes": [{"scheme": "centralized", "s_bits": 2}],
      "period": 4, "targets": [], "n_trials": 100})")
              .find("s_bits") != std::string::npos);
    CHECK(message_of(R"({"k_users": 1,
      "models": [{"type": "constant", "value": 1.0}],
      "schemes": [{"scheme": "rlt"}],
      "period": 4, "targets": [], "n_trials": 100})")
              .find("s_bits") != std::string::npos);
    CHECK(message_of(R"({"k_users": 1,
      "models": [{"type": "constant", "value": 1.0}],
      "schemes": [{"scheme": "centralized"}],
      "period": 4, "targets": [{"alpha": 0.6, "beta": 0.5}], "n_trials": 100})")
              .find("alpha + beta") != std::string::npos);
    CHECK(message_of(R"({"k_users": 3,
      "models": [{"type": "constant", "value": 1.0}, {"type": "constant", "value": 1.0}],
      "schemes": [{"scheme": "centralized"}],
      "period": 4, "targets": [], "n_trials": 100})")
              .find("k_users") != std::string::npos);
    CHECK(message_of(R"({"k_users": 1,
      "models": [{"type": "warp", "value": 1.0}],
      "schemes": [{"scheme": "centralized"}],
      "period": 4, "targets": [], "n_trials": 100})")
              .find("model") != std::string::npos);
}

TEST_CASE("config file loading reports the path") {
    try {
        (void)load_experiment_config("/nonexistent/seqsense.json");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("/nonexistent/seqsense.json") != std::string::npos);
    }
}

}  // TEST_SUITE
