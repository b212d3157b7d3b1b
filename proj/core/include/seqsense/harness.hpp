#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "seqsense/calibration.hpp"

namespace seqsense {

constexpr uint64_t kDefaultSeed = 12345;

/// Invalid experiment description: bad config file, unusable parameter
/// combination, or a calibration manifest that does not cover a requested
/// point.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One scheme under test; s_bits is 0 for the centralized baseline.
struct SchemePoint {
    Scheme scheme = Scheme::Centralized;
    int s_bits = 0;
};

struct ExperimentConfig {
    int k_users = 2;
    std::vector<DetectorModel> models;  // one entry (replicated) or k_users entries
    std::vector<SchemePoint> schemes;
    int period = 4;
    std::vector<std::pair<double, double>> targets;      // (alpha, beta)
    std::vector<double> snr_db;                          // snr-grid abscissae
    std::vector<int> k_grid;                             // k-grid abscissae
    std::vector<std::pair<double, double>> delay_pairs;  // oc-curve (E0 delay, E1 delay)
    int64_t n_trials = 10000;
    int64_t horizon = 1000000;
    std::optional<uint64_t> seed;
    int64_t constants_samples = 400000;
    double phi_quantile = 1e-4;
    DeltaKl delta_kl = DeltaKl::H1;
};

enum class SweepFamily { ErrorGrid, SnrGrid, KGrid, OcCurve };

std::string_view family_name(SweepFamily family);
std::optional<SweepFamily> family_from_name(std::string_view name);

/// One (scheme, K, model bank, target) cell of an experiment family.
struct ExperimentPoint {
    SchemePoint scheme;
    int k_users = 1;
    std::vector<DetectorModel> models;
    double target_alpha = 0.0, target_beta = 0.0;
    double target_delay_h0 = -1.0, target_delay_h1 = -1.0;
};

/// Expands a config into the family's grid of points. Throws ConfigError when
/// the config lacks the fields the family needs (e.g. snr_db for snr-grid) or
/// mixes unsupported models (snr-grid maps SNR onto energy and gaussian
/// models only).
std::vector<ExperimentPoint> experiment_points(const ExperimentConfig& config,
                                               SweepFamily family);

/// Change-of-measure error estimate from trials generated under trials_hyp:
/// for H1 trials the mean of e^{-L} over trials deciding H1 estimates alpha;
/// for H0 trials the mean of e^{+L} over trials deciding H0 estimates beta.
/// Censored trials are excluded.
ErrorEstimate estimate_error_importance(std::span<const TrialResult> trials,
                                        Hypothesis trials_hyp);

/// Direct wrong-decision fraction among non-censored trials.
ErrorEstimate estimate_error_direct(std::span<const TrialResult> trials, Hypothesis trials_hyp);

/// Runs n_trials independent trials with per-trial counter-derived seeds;
/// deterministic for any worker count.
std::vector<TrialResult> run_trial_batch(const SchemeConfig& cfg,
                                         std::span<const DetectorModel> models, Hypothesis hyp,
                                         int64_t n_trials, int64_t horizon,
                                         uint64_t master_seed, int workers);

/// One output row; mirrors the CSV columns exactly. By convention the row for
/// hyp = i reports the error made when H_i is true (alpha on hyp = 0 rows,
/// beta on hyp = 1 rows); err_direct counts this row's own trials, err_is is
/// the change-of-measure estimate from the companion batch under the other
/// hypothesis.
struct PointSummary {
    std::string scheme;
    int s_bits = 0;
    int period = 4;
    int k_users = 1;
    int hyp = 0;
    double target_alpha = 0.0, target_beta = 0.0;
    double a = 0.0, b = 0.0, delta = 0.0;
    double mean_delay = 0.0, se_delay = 0.0;
    double err_direct = 0.0, se_err_direct = 0.0;
    double err_is = 0.0, se_err_is = 0.0;
    double msg_rate = 0.0;
    double censored_frac = 0.0;
    int64_t n_trials = 0;
    uint64_t seed = 0;
};

struct ExperimentSummary {
    std::vector<PointSummary> rows;
};

/// Runs every point of the family under both hypotheses at the thresholds
/// recorded in the manifest. Throws ConfigError when an entry is missing.
ExperimentSummary run_experiment(const ExperimentConfig& config,
                                 const CalibrationManifest& manifest, SweepFamily family,
                                 uint64_t master_seed, int workers);

/// Calibrates every point of the family (constants, delta, thresholds) and
/// returns the manifest to persist. Model constants are computed once per
/// distinct model bank and shared across schemes and targets.
CalibrationManifest calibrate_experiment(const ExperimentConfig& config, SweepFamily family,
                                         uint64_t master_seed, int workers);

std::string_view csv_header();
std::string summary_to_csv(const ExperimentSummary& summary);
void write_summary_csv(const ExperimentSummary& summary, const std::string& path);

/// Runs the family and writes its CSV (error_grid.csv, snr_grid.csv,
/// k_grid.csv or oc_curve.csv) under out_dir. The three delay-vs-x families
/// emit the H1 rows the delay curves are drawn from; oc-curve emits both
/// hypotheses. Returns the paths written; the full both-hypothesis summary
/// is copied to out_summary when given.
std::vector<std::string> sweep(const ExperimentConfig& config,
                               const CalibrationManifest& manifest, SweepFamily family,
                               const std::string& out_dir, uint64_t master_seed, int workers,
                               ExperimentSummary* out_summary = nullptr);

}  // namespace seqsense
