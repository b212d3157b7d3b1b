#include "seqsense/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "parallel.hpp"

namespace seqsense {

namespace {

constexpr uint64_t kRunTrialTag = 0x72756e;     // experiment trial streams
constexpr uint64_t kCalibPointTag = 0x63616c;   // per-point calibration seeds
constexpr uint64_t kConstantsSeedTag = 0x6b6c;  // model-constants estimation

std::vector<DetectorModel> replicate_models(const ExperimentConfig& cfg, int k_users) {
    if (cfg.models.empty()) throw ConfigError("config: models must not be empty");
    if (cfg.models.size() == 1)
        return std::vector<DetectorModel>(static_cast<size_t>(k_users), cfg.models[0]);
    if (static_cast<int>(cfg.models.size()) == k_users) return cfg.models;
    throw ConfigError("config: models must have one entry or exactly k_users entries");
}

DetectorModel model_at_snr(const DetectorModel& model, double snr_db) {
    const double snr = std::pow(10.0, snr_db / 10.0);
    if (std::holds_alternative<EnergyDetectorParams>(model))
        return EnergyDetectorParams{2.0 * snr};
    if (const auto* g = std::get_if<GaussianDetectorParams>(&model))
        return GaussianDetectorParams{g->sigma_w2 * snr, g->sigma_w2};
    throw ConfigError("snr-grid supports energy and gaussian models only");
}

std::pair<double, double> first_target(const ExperimentConfig& cfg) {
    if (cfg.targets.empty())
        throw ConfigError("config: this family needs at least one (alpha, beta) target");
    return cfg.targets.front();
}

void append_number(std::string& out, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    out += buf;
}

}  // namespace

std::string_view family_name(SweepFamily family) {
    switch (family) {
        case SweepFamily::ErrorGrid: return "error-grid";
        case SweepFamily::SnrGrid: return "snr-grid";
        case SweepFamily::KGrid: return "k-grid";
        default: return "oc-curve";
    }
}

std::optional<SweepFamily> family_from_name(std::string_view name) {
    if (name == "error-grid") return SweepFamily::ErrorGrid;
    if (name == "snr-grid") return SweepFamily::SnrGrid;
    if (name == "k-grid") return SweepFamily::KGrid;
    if (name == "oc-curve") return SweepFamily::OcCurve;
    return std::nullopt;
}

std::vector<ExperimentPoint> experiment_points(const ExperimentConfig& cfg,
                                               SweepFamily family) {
    if (cfg.schemes.empty()) throw ConfigError("config: schemes must not be empty");
    std::vector<ExperimentPoint> points;
    switch (family) {
        case SweepFamily::ErrorGrid: {
            if (cfg.targets.empty())
                throw ConfigError("config: error-grid needs a non-empty targets list");
            for (const auto& scheme : cfg.schemes)
                for (const auto& [ta, tb] : cfg.targets)
                    points.push_back({scheme, cfg.k_users, replicate_models(cfg, cfg.k_users),
                                      ta, tb});
            break;
        }
        case SweepFamily::SnrGrid: {
            if (cfg.snr_db.empty())
                throw ConfigError("config: snr-grid needs a non-empty snr_db list");
            const auto [ta, tb] = first_target(cfg);
            for (const auto& scheme : cfg.schemes)
                for (double snr : cfg.snr_db) {
                    auto models = replicate_models(cfg, cfg.k_users);
                    for (auto& m : models) m = model_at_snr(m, snr);
                    points.push_back({scheme, cfg.k_users, std::move(models), ta, tb});
                }
            break;
        }
        case SweepFamily::KGrid: {
            if (cfg.k_grid.empty())
                throw ConfigError("config: k-grid needs a non-empty k_grid list");
            if (cfg.models.size() != 1)
                throw ConfigError("config: k-grid needs a single model template");
            const auto [ta, tb] = first_target(cfg);
            for (const auto& scheme : cfg.schemes)
                for (int k : cfg.k_grid) {
                    if (k < 1) throw ConfigError("config: k_grid entries must be >= 1");
                    points.push_back({scheme, k,
                                      std::vector<DetectorModel>(static_cast<size_t>(k),
                                                                 cfg.models[0]),
                                      ta, tb});
                }
            break;
        }
        case SweepFamily::OcCurve: {
            if (cfg.delay_pairs.empty())
                throw ConfigError("config: oc-curve needs a non-empty delay_pairs list");
            for (const auto& scheme : cfg.schemes)
                for (const auto& [d0, d1] : cfg.delay_pairs) {
                    ExperimentPoint p{scheme, cfg.k_users, replicate_models(cfg, cfg.k_users),
                                      0.0, 0.0, d0, d1};
                    points.push_back(std::move(p));
                }
            break;
        }
    }
    return points;
}

ErrorEstimate estimate_error_importance(std::span<const TrialResult> trials,
                                        Hypothesis trials_hyp) {
    // Censored trials never decide, so they enter the change-of-measure mean
    // with weight zero; that keeps the identity alpha = E1[e^{-L} 1{decide H1}]
    // exact for horizon-truncated tests. Their count is reported separately.
    RunningStat stat;
    for (const auto& t : trials) {
        double w = 0.0;
        if (!t.censored && t.decision && *t.decision == trials_hyp)
            w = trials_hyp == Hypothesis::H1 ? std::exp(-t.centralized_llr_at_stop)
                                             : std::exp(t.centralized_llr_at_stop);
        stat.add(w);
    }
    return {stat.mean, stat.standard_error()};
}

ErrorEstimate estimate_error_direct(std::span<const TrialResult> trials, Hypothesis trials_hyp) {
    RunningStat stat;
    for (const auto& t : trials)
        stat.add(!t.censored && t.decision == opposite(trials_hyp) ? 1.0 : 0.0);
    return {stat.mean, stat.standard_error()};
}

std::vector<TrialResult> run_trial_batch(const SchemeConfig& cfg,
                                         std::span<const DetectorModel> models, Hypothesis hyp,
                                         int64_t n_trials, int64_t horizon,
                                         uint64_t master_seed, int workers) {
    std::vector<TrialResult> out(static_cast<size_t>(n_trials));
    detail::parallel_for(n_trials, workers, [&](int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i) {
            const uint64_t seed = derive_seed(
                master_seed, {kRunTrialTag, static_cast<uint64_t>(hyp),
                              static_cast<uint64_t>(i)});
            out[static_cast<size_t>(i)] = run_scheme(cfg, models, hyp, horizon, seed);
        }
    });
    return out;
}

namespace {

SchemeConfig scheme_config_from_entry(const ExperimentPoint& point, const ManifestEntry& e) {
    SchemeConfig sc;
    sc.scheme = point.scheme.scheme;
    sc.s_bits = std::max(1, e.s_bits);
    sc.period = e.period;
    sc.delta = e.delta;
    sc.phi = e.phi;
    sc.thresholds = {e.a, e.b};
    return sc;
}

const ManifestEntry& require_entry(const CalibrationManifest& manifest,
                                   const ExperimentPoint& p, int period) {
    const ManifestEntry* e =
        manifest.find(scheme_name(p.scheme.scheme), p.scheme.s_bits, period, p.k_users,
                      p.models, p.target_alpha, p.target_beta, p.target_delay_h0,
                      p.target_delay_h1);
    if (!e) {
        std::string msg = "calibration manifest has no entry for scheme=";
        msg += scheme_name(p.scheme.scheme);
        msg += " s_bits=" + std::to_string(p.scheme.s_bits);
        msg += " K=" + std::to_string(p.k_users);
        msg += " targets=(" + std::to_string(p.target_alpha) + ", " +
               std::to_string(p.target_beta) + ")";
        msg += "; run the calibrate subcommand for this config first";
        throw ConfigError(msg);
    }
    return *e;
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const CalibrationManifest& manifest, SweepFamily family,
                                 uint64_t master_seed, int workers) {
    const auto points = experiment_points(config, family);
    ExperimentSummary summary;
    for (const auto& point : points) {
        const ManifestEntry& entry = require_entry(manifest, point, config.period);
        const SchemeConfig sc = scheme_config_from_entry(point, entry);
        std::vector<TrialResult> batch[2];
        for (Hypothesis hyp : {Hypothesis::H0, Hypothesis::H1})
            batch[static_cast<int>(hyp)] =
                run_trial_batch(sc, point.models, hyp, config.n_trials, config.horizon,
                                master_seed, workers);

        for (Hypothesis hyp : {Hypothesis::H0, Hypothesis::H1}) {
            const auto& own = batch[static_cast<int>(hyp)];
            const auto& companion = batch[static_cast<int>(opposite(hyp))];
            RunningStat delay;
            int64_t censored = 0;
            int64_t total_messages = 0;
            int64_t total_time = 0;
            for (const auto& t : own) {
                total_messages += t.message_count;
                total_time += t.stop_time;
                if (t.censored) {
                    ++censored;
                    continue;
                }
                delay.add(static_cast<double>(t.stop_time));
            }
            const ErrorEstimate direct = estimate_error_direct(own, hyp);
            const ErrorEstimate is = estimate_error_importance(companion, opposite(hyp));

            PointSummary row;
            row.scheme = std::string(scheme_name(point.scheme.scheme));
            row.s_bits = point.scheme.s_bits;
            row.period = config.period;
            row.k_users = point.k_users;
            row.hyp = static_cast<int>(hyp);
            row.target_alpha = point.target_alpha;
            row.target_beta = point.target_beta;
            row.a = entry.a;
            row.b = entry.b;
            row.delta = entry.delta;
            row.mean_delay = delay.mean;
            row.se_delay = delay.standard_error();
            row.err_direct = direct.value;
            row.se_err_direct = direct.se;
            row.err_is = is.value;
            row.se_err_is = is.se;
            row.msg_rate = total_time > 0 ? static_cast<double>(total_messages) /
                                                static_cast<double>(total_time)
                                          : 0.0;
            row.censored_frac =
                static_cast<double>(censored) / static_cast<double>(config.n_trials);
            row.n_trials = config.n_trials;
            row.seed = master_seed;
            summary.rows.push_back(std::move(row));
        }
    }
    return summary;
}

CalibrationManifest calibrate_experiment(const ExperimentConfig& config, SweepFamily family,
                                         uint64_t master_seed, int workers) {
    const auto points = experiment_points(config, family);
    CalibrationManifest manifest;
    std::vector<std::pair<std::vector<DetectorModel>, PooledConstants>> constants_cache;
    const uint64_t constants_seed = derive_seed(master_seed, {kConstantsSeedTag});

    for (size_t pi = 0; pi < points.size(); ++pi) {
        const auto& point = points[pi];
        const PooledConstants* constants = nullptr;
        for (const auto& [models, c] : constants_cache)
            if (models == point.models) constants = &c;
        if (!constants) {
            constants_cache.emplace_back(
                point.models,
                pooled_constants(point.models, config.period, config.delta_kl,
                                 config.constants_samples, config.phi_quantile,
                                 constants_seed));
            constants = &constants_cache.back().second;
        }

        SchemeConfig sc;
        sc.scheme = point.scheme.scheme;
        sc.s_bits = std::max(1, point.scheme.s_bits);
        sc.period = config.period;
        sc.delta = constants->delta;
        sc.phi = constants->phi;

        const uint64_t cal_seed = derive_seed(master_seed, {kCalibPointTag, pi});
        const CalibrationResult res =
            family == SweepFamily::OcCurve
                ? calibrate_delay_thresholds(sc, point.models, point.target_delay_h0,
                                             point.target_delay_h1, config.n_trials,
                                             config.horizon, cal_seed, workers)
                : calibrate_thresholds(sc, point.models, point.target_alpha,
                                       point.target_beta, config.n_trials, config.horizon,
                                       cal_seed, workers);

        ManifestEntry e;
        e.scheme = std::string(scheme_name(point.scheme.scheme));
        e.s_bits = point.scheme.s_bits;
        e.period = config.period;
        e.k_users = point.k_users;
        e.models = point.models;
        e.target_alpha = point.target_alpha;
        e.target_beta = point.target_beta;
        e.target_delay_h0 = point.target_delay_h0;
        e.target_delay_h1 = point.target_delay_h1;
        e.kl_h0 = constants->kl_h0;
        e.kl_h1 = constants->kl_h1;
        e.phi = constants->phi;
        e.delta = constants->delta;
        e.a = res.thresholds.a;
        e.b = res.thresholds.b;
        e.achieved_alpha = res.achieved_alpha.value;
        e.achieved_alpha_se = res.achieved_alpha.se;
        e.achieved_beta = res.achieved_beta.value;
        e.achieved_beta_se = res.achieved_beta.se;
        e.message_rate_h0 = res.message_rate_h0;
        e.message_rate_h1 = res.message_rate_h1;
        e.seed = cal_seed;
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

std::string_view csv_header() {
    return "scheme,s_bits,T,K,hyp,target_alpha,target_beta,A,B,delta,mean_delay,se_delay,"
           "err_direct,se_err_direct,err_is,se_err_is,msg_rate,censored_frac,n_trials,seed";
}

std::string summary_to_csv(const ExperimentSummary& summary) {
    std::string out{csv_header()};
    out += '\n';
    for (const auto& r : summary.rows) {
        out += r.scheme;
        out += ',' + std::to_string(r.s_bits);
        out += ',' + std::to_string(r.period);
        out += ',' + std::to_string(r.k_users);
        out += ',' + std::to_string(r.hyp);
        for (double v : {r.target_alpha, r.target_beta, r.a, r.b, r.delta, r.mean_delay,
                         r.se_delay, r.err_direct, r.se_err_direct, r.err_is, r.se_err_is,
                         r.msg_rate, r.censored_frac}) {
            out += ',';
            append_number(out, v);
        }
        out += ',' + std::to_string(r.n_trials);
        out += ',' + std::to_string(r.seed);
        out += '\n';
    }
    return out;
}

void write_summary_csv(const ExperimentSummary& summary, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write CSV: " + path);
    f << summary_to_csv(summary);
}

std::vector<std::string> sweep(const ExperimentConfig& config,
                               const CalibrationManifest& manifest, SweepFamily family,
                               const std::string& out_dir, uint64_t master_seed, int workers,
                               ExperimentSummary* out_summary) {
    ExperimentSummary all = run_experiment(config, manifest, family, master_seed, workers);
    if (out_summary) *out_summary = all;
    ExperimentSummary filtered;
    for (auto& row : all.rows) {
        // The delay-vs-x families publish the H1 rows the curves are drawn
        // from; the operating characteristic needs both error coordinates.
        if (family == SweepFamily::OcCurve || row.hyp == 1)
            filtered.rows.push_back(std::move(row));
    }
    std::string name{family_name(family)};
    std::replace(name.begin(), name.end(), '-', '_');
    std::filesystem::create_directories(out_dir);
    const std::string path = out_dir + "/" + name + ".csv";
    write_summary_csv(filtered, path);
    return {path};
}

}  // namespace seqsense
