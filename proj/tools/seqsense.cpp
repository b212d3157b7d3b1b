// seqsense: cooperative sequential spectrum-sensing simulator.
//
// Subcommands:
//   constants  estimate per-model KL numbers and the LLR bound phi
//   calibrate  compute thresholds/delta for a config and write the manifest
//   run        run the configured experiment grid, write results.csv
//   sweep      run one experiment family, write its CSV
//   selftest   quick internal consistency checks

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "seqsense/config.hpp"
#include "seqsense/harness.hpp"

namespace {

using namespace seqsense;

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    std::string manifest_path;  // defaults to <out>/manifest.json
    std::optional<uint64_t> seed;
    int workers = 0;
    int64_t trials = 0;  // 0: keep the config value
    std::string family = "error-grid";
    std::vector<std::string> scheme_filter;
    int bits_filter = -1;
};

uint64_t resolve_seed(const CommonOpts& opts, const ExperimentConfig& cfg) {
    if (opts.seed) return *opts.seed;
    if (cfg.seed) return *cfg.seed;
    if (const char* env = std::getenv("SEQSENSE_SEED")) {
        char* end = nullptr;
        const auto v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return v;
        throw ConfigError("SEQSENSE_SEED is not a nonnegative integer");
    }
    return kDefaultSeed;
}

int resolve_workers(const CommonOpts& opts) {
    if (opts.workers > 0) return opts.workers;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

ExperimentConfig load_and_filter(const CommonOpts& opts) {
    ExperimentConfig cfg = load_experiment_config(opts.config_path);
    if (opts.trials > 0) cfg.n_trials = opts.trials;
    if (!opts.scheme_filter.empty() || opts.bits_filter >= 0) {
        std::vector<SchemePoint> kept;
        for (const auto& sp : cfg.schemes) {
            const std::string name{scheme_name(sp.scheme)};
            if (!opts.scheme_filter.empty() &&
                std::find(opts.scheme_filter.begin(), opts.scheme_filter.end(), name) ==
                    opts.scheme_filter.end())
                continue;
            if (opts.bits_filter >= 0 && sp.s_bits != opts.bits_filter &&
                sp.scheme != Scheme::Centralized)
                continue;
            kept.push_back(sp);
        }
        if (kept.empty())
            throw ConfigError("scheme/bits filters left no schemes to run");
        cfg.schemes = std::move(kept);
    }
    return cfg;
}

SweepFamily parse_family(const std::string& name) {
    const auto family = family_from_name(name);
    if (!family)
        throw ConfigError("unknown family '" + name +
                          "' (error-grid | snr-grid | k-grid | oc-curve)");
    return *family;
}

std::string manifest_path_of(const CommonOpts& opts) {
    return opts.manifest_path.empty() ? opts.out_dir + "/manifest.json" : opts.manifest_path;
}

std::string model_label(const DetectorModel& m) {
    switch (m.index()) {
        case 0: return "energy";
        case 1: return "spectral";
        case 2: return "gaussian";
        case 3: return "constant";
        default: return "bernoulli";
    }
}

int cmd_constants(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_and_filter(opts);
    const uint64_t seed = resolve_seed(opts, cfg);
    std::vector<DetectorModel> models = cfg.models;
    if (models.size() == 1 && cfg.k_users > 1)
        models.assign(static_cast<size_t>(cfg.k_users), cfg.models[0]);
    char line[256];
    for (size_t k = 0; k < models.size(); ++k) {
        Rng rng(derive_seed(seed, {0x6b6c, k}));
        const ModelConstants c =
            estimate_constants(models[k], cfg.constants_samples, cfg.phi_quantile, rng);
        std::snprintf(line, sizeof(line),
                      "model %zu: %-9s I0=%.6f (se %.6f)  I1=%.6f (se %.6f)  phi=%.6f", k,
                      model_label(models[k]).c_str(), c.kl_h0, c.kl_h0_se, c.kl_h1,
                      c.kl_h1_se, c.phi);
        std::cout << line << '\n';
    }
    const PooledConstants pooled = pooled_constants(
        models, cfg.period, cfg.delta_kl, cfg.constants_samples, cfg.phi_quantile,
        derive_seed(seed, {0x6b6c}));
    std::snprintf(line, sizeof(line),
                  "pooled:  I0=%.6f  I1=%.6f  phi=%.6f  delta(T=%d)=%.6f  K/T=%.6f",
                  pooled.kl_h0, pooled.kl_h1, pooled.phi, cfg.period, pooled.delta,
                  static_cast<double>(cfg.k_users) / cfg.period);
    std::cout << line << '\n';
    return 0;
}

int cmd_calibrate(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_and_filter(opts);
    if (cfg.n_trials < 10000)
        throw ConfigError("calibrate needs n_trials >= 10000 (per-threshold Monte Carlo)");
    const uint64_t seed = resolve_seed(opts, cfg);
    const SweepFamily family = parse_family(opts.family);
    const CalibrationManifest manifest =
        calibrate_experiment(cfg, family, seed, resolve_workers(opts));
    std::filesystem::create_directories(opts.out_dir);
    const std::string path = manifest_path_of(opts);
    save_manifest(manifest, path);
    std::cout << "wrote " << path << " (" << manifest.entries.size() << " entries, seed "
              << seed << ")\n";
    return 0;
}

void warn_censoring(const ExperimentSummary& summary) {
    for (const auto& row : summary.rows) {
        if (row.censored_frac > 0.001) {
            std::cerr << "warning: " << row.scheme << " s_bits=" << row.s_bits
                      << " K=" << row.k_users << " hyp=" << row.hyp << ": "
                      << row.censored_frac * 100.0
                      << "% of trials hit the horizon; the delay mean excludes them\n";
        }
    }
}

int cmd_run(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_and_filter(opts);
    const uint64_t seed = resolve_seed(opts, cfg);
    const std::string mpath = manifest_path_of(opts);
    CalibrationManifest manifest;
    try {
        manifest = load_manifest(mpath);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    const auto summary = run_experiment(cfg, manifest, SweepFamily::ErrorGrid, seed,
                                        resolve_workers(opts));
    warn_censoring(summary);
    std::filesystem::create_directories(opts.out_dir);
    const std::string path = opts.out_dir + "/results.csv";
    write_summary_csv(summary, path);
    std::cout << "wrote " << path << " (" << summary.rows.size() << " rows, seed " << seed
              << ")\n";
    return 0;
}

int cmd_sweep(const CommonOpts& opts) {
    const ExperimentConfig cfg = load_and_filter(opts);
    const uint64_t seed = resolve_seed(opts, cfg);
    const SweepFamily family = parse_family(opts.family);
    const std::string mpath = manifest_path_of(opts);
    CalibrationManifest manifest;
    try {
        manifest = load_manifest(mpath);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    ExperimentSummary summary;
    const auto paths = sweep(cfg, manifest, family, opts.out_dir, seed,
                             resolve_workers(opts), &summary);
    warn_censoring(summary);
    for (const auto& p : paths) std::cout << "wrote " << p << " (seed " << seed << ")\n";
    return 0;
}

// Quick consistency checks: quantizer contract, reconstruction bound, and a
// lattice-walk oracle against the trial engine.
int cmd_selftest() {
    int failures = 0;
    auto report = [&failures](const char* name, bool ok, const std::string& detail = "") {
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << name;
        if (!ok && !detail.empty()) std::cout << ": " << detail;
        std::cout << '\n';
        failures += !ok;
    };

    {
        bool ok = true;
        std::string detail;
        const double phi = 2.0;
        for (int r_hat : {1, 3, 15}) {
            const double eps_hat = phi / r_hat;
            for (int i = 0; i < 400 && ok; ++i) {
                const double q = phi * i / 400.0;
                const double p = quantize_lower_probability(q, r_hat, phi);
                const double m = std::floor(q / eps_hat);
                const double up =
                    p * std::exp(m * eps_hat) + (1.0 - p) * std::exp((m + 1.0) * eps_hat);
                if (!(p >= 0.0 && p <= 1.0) ||
                    std::abs(up - std::exp(q)) > 1e-12 * std::exp(q)) {
                    ok = false;
                    detail = "q=" + std::to_string(q) + " r_hat=" + std::to_string(r_hat);
                }
            }
        }
        report("quantizer randomization: p in [0,1], e^{q_hat} unbiased", ok, detail);
    }
    {
        bool ok = true;
        Rng rng(1);
        for (int i = 0; i < 5000 && ok; ++i) {
            const double q = 2.0 * rng.uniform() * (1.0 - 1e-12);
            const int level = randomized_quantize(q, 7, 2.0, rng);
            ok = std::abs(q - level * 2.0 / 7.0) <= 2.0 / 7.0 + 1e-15;
        }
        report("overshoot reconstruction stays within one lattice cell", ok);
    }
    {
        // Exact absorption probabilities of the +-1 lattice walk by value
        // recursion, checked against simulated trials and their importance-
        // sampled error estimate.
        const double a = 3.0, b = 3.0;
        const int horizon = 20;
        const double p1 = std::exp(1.0) / (1.0 + std::exp(1.0));
        auto absorb = [&](double p_up) {
            std::vector<double> mass(7, 0.0);  // levels -3..3, shifted by +3
            mass[3] = 1.0;
            double hit_hi = 0.0;
            for (int t = 0; t < horizon; ++t) {
                std::vector<double> next(7, 0.0);
                for (int s = 1; s <= 5; ++s) {
                    next[static_cast<size_t>(s + 1)] += mass[static_cast<size_t>(s)] * p_up;
                    next[static_cast<size_t>(s - 1)] +=
                        mass[static_cast<size_t>(s)] * (1.0 - p_up);
                }
                hit_hi += next[6];
                next[6] = 0.0;
                next[0] = 0.0;
                mass = std::move(next);
            }
            return hit_hi;
        };
        const double alpha_exact = absorb(1.0 - p1);

        SchemeConfig sc;
        sc.scheme = Scheme::Centralized;
        sc.thresholds = {a, b};
        const std::vector<DetectorModel> models{BernoulliLlrParams{1.0}};
        const int64_t n = 20000;
        int64_t wrong = 0;
        RunningStat weights;
        for (int64_t i = 0; i < n; ++i) {
            const auto h0 = run_scheme(sc, models, Hypothesis::H0, horizon,
                                       derive_seed(3, {0, static_cast<uint64_t>(i)}));
            wrong += !h0.censored && h0.decision == Hypothesis::H1;
            const auto h1 = run_scheme(sc, models, Hypothesis::H1, horizon,
                                       derive_seed(3, {1, static_cast<uint64_t>(i)}));
            weights.add(!h1.censored && h1.decision == Hypothesis::H1
                            ? std::exp(-h1.centralized_llr_at_stop)
                            : 0.0);
        }
        const double direct = static_cast<double>(wrong) / static_cast<double>(n);
        const double se = std::sqrt(alpha_exact * (1.0 - alpha_exact) / n);
        const bool ok_direct = std::abs(direct - alpha_exact) <= 4.0 * se;
        const bool ok_is = std::abs(weights.mean - alpha_exact) <=
                           4.0 * std::max(weights.standard_error(), 1e-12);
        report("lattice-walk error probability matches the exact recursion", ok_direct,
               "direct=" + std::to_string(direct) + " exact=" + std::to_string(alpha_exact));
        report("importance-sampled error matches the exact recursion", ok_is,
               "is=" + std::to_string(weights.mean) + " exact=" + std::to_string(alpha_exact));
    }
    std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cooperative sequential spectrum-sensing simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    auto add_common = [&opts](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", opts.config_path, "experiment config (JSON)");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out_dir, "output directory");
        sub->add_option("--manifest", opts.manifest_path,
                        "calibration manifest path (default <out>/manifest.json)");
        sub->add_option("--seed", opts.seed,
                        "master seed (overrides config and SEQSENSE_SEED)");
        sub->add_option("--workers", opts.workers, "worker threads (default: all cores)");
        sub->add_option("--trials", opts.trials, "override n_trials from the config");
        sub->add_option("--scheme", opts.scheme_filter,
                        "restrict to schemes (centralized | qsprt | rlt)");
        sub->add_option("--bits", opts.bits_filter, "restrict to one bit budget");
    };

    auto* constants = app.add_subcommand("constants", "estimate KL numbers and phi");
    add_common(constants, true);
    auto* calibrate =
        app.add_subcommand("calibrate", "calibrate thresholds and write the manifest");
    add_common(calibrate, true);
    calibrate->add_option("--family", opts.family,
                          "experiment family (error-grid | snr-grid | k-grid | oc-curve)");
    auto* run = app.add_subcommand("run", "run the target grid and write results.csv");
    add_common(run, true);
    auto* sweep_cmd = app.add_subcommand("sweep", "run one experiment family");
    add_common(sweep_cmd, true);
    sweep_cmd
        ->add_option("--family", opts.family,
                     "experiment family (error-grid | snr-grid | k-grid | oc-curve)")
        ->required();
    auto* selftest = app.add_subcommand("selftest", "internal consistency checks");
    (void)selftest;

    CLI11_PARSE(app, argc, argv);

    try {
        if (constants->parsed()) return cmd_constants(opts);
        if (calibrate->parsed()) return cmd_calibrate(opts);
        if (run->parsed()) return cmd_run(opts);
        if (sweep_cmd->parsed()) return cmd_sweep(opts);
        return cmd_selftest();
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
