#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqsense/fusion.hpp"
#include "seqsense/stats.hpp"

namespace seqsense {

/// Per-message bit budget. A budget of s bits buys r_tilde = 2^s uniform
/// levels for Q-SPRT and 2(1 + r_hat) = 2^s messages for RLT-SPRT, i.e.
/// r_hat = 2^(s-1) - 1 overshoot levels next to the sign bit.
struct BitBudget {
    int s = 1;
};

/// (r_tilde, r_hat) for a bit budget; throws std::invalid_argument unless
/// 1 <= s <= 24.
std::pair<int, int> bits_to_levels(const BitBudget& budget);

/// The unique Delta >= 0 with Delta * tanh(Delta / 2) = t_period * kl, to
/// 1e-10 absolute residual. The left side is strictly increasing from zero,
/// so a bracketing bisection always converges; input zero returns zero.
double solve_delta(int t_period, double kl);

/// Sequential delay lower bound H(beta, alpha) / (K I1) under H1 and
/// H(alpha, beta) / (K I0) under H0, with kl the information number of the
/// flagged hypothesis. Throws std::domain_error outside 0 < alpha, beta and
/// alpha + beta <= 1.
double delay_lower_bound(double alpha, double beta, double kl, int k_users, Hypothesis hyp);

/// Which hypothesis' KL number feeds the rate-matching equation for Delta.
enum class DeltaKl { H0, H1, Mean };

/// Shared constants for a bank of SU models: KL numbers averaged over SUs,
/// phi pooled as the max over SUs, and the single shared Delta solving the
/// rate-matching equation for the chosen KL number.
struct PooledConstants {
    double kl_h0 = 0.0;
    double kl_h1 = 0.0;
    double phi = 0.0;
    double delta = 0.0;
};

PooledConstants pooled_constants(std::span<const DetectorModel> models, int period,
                                 DeltaKl choice, int64_t n_samples, double quantile,
                                 uint64_t seed);

/// A bundle of FC trajectories simulated once per (scheme, hypothesis) out to
/// wide recording bounds. SU-side sampling never depends on the FC
/// thresholds, so any threshold pair inside the bounds can be replayed
/// exactly on the frozen paths. This gives common random numbers across
/// threshold candidates for free: the empirical error is monotone in each
/// threshold path by path, which makes bisection sound.
class PathEnsemble {
public:
    PathEnsemble(SchemeConfig cfg, std::vector<DetectorModel> models, Hypothesis hyp,
                 int64_t n_trials, int64_t horizon, uint64_t master_seed, uint64_t stream_tag,
                 int workers);

    /// Grows the recording bounds (geometrically) and resimulates when the
    /// requested bounds exceed the current ones. Deterministic: trial seeds
    /// never change, so regrown paths extend the old ones.
    void ensure_bounds(double a_max, double b_max);

    struct Stats {
        double mean_delay = 0.0;
        double se_delay = 0.0;
        ErrorEstimate err_direct;  // wrong-decision fraction under this hypothesis
        ErrorEstimate err_is;      // opposite-hypothesis error via change of measure
        double message_rate = 0.0;
        double censored_frac = 0.0;
        int64_t n = 0;
    };

    /// Replays every path at the given thresholds and aggregates. Requires
    /// thresholds inside the current recording bounds.
    Stats evaluate(const SprtThresholds& thr) const;

    /// Replay of a single trial; bit-identical to run_scheme with the same
    /// trial seed and thresholds.
    TrialResult replay(int64_t trial_index, const SprtThresholds& thr) const;

    uint64_t trial_seed(int64_t trial_index) const;
    Hypothesis hypothesis() const { return hyp_; }
    int64_t size() const { return n_trials_; }
    double bound_a() const { return bound_a_; }
    double bound_b() const { return bound_b_; }

private:
    void simulate();

    SchemeConfig cfg_;
    std::vector<DetectorModel> models_;
    Hypothesis hyp_;
    int64_t n_trials_;
    int64_t horizon_;
    uint64_t master_seed_;
    uint64_t stream_tag_;
    int workers_;
    double bound_a_ = 0.0;
    double bound_b_ = 0.0;
    std::vector<TrialPath> paths_;
};

struct CalibrationSettings {
    double error_band = 0.1;   // accept achieved error within target * (1 +- band)
    double delay_band = 0.02;  // accept achieved delay within target * (1 +- band)
    int max_bisect_iters = 80;
    int rounds = 2;            // alternating refinements of A and B
};

struct CalibrationResult {
    double delta = 0.0;
    SprtThresholds thresholds;
    ErrorEstimate achieved_alpha;
    ErrorEstimate achieved_beta;
    double mean_delay_h0 = 0.0, se_delay_h0 = 0.0;
    double mean_delay_h1 = 0.0, se_delay_h1 = 0.0;
    double message_rate_h0 = 0.0, message_rate_h1 = 0.0;
    /// Set when the achievable-error lattice skipped the target band and the
    /// closest achievable error <= target was returned instead.
    bool alpha_floor = false;
    bool beta_floor = false;
};

/// Monotone bisection on each threshold against importance-sampled error
/// estimates over frozen path ensembles (common random numbers), starting
/// from the Wald bound |log target|. Detects the finite-bit achievability
/// floor and then returns the closest achievable error <= target. Requires
/// target_alpha + target_beta < 1 and n_trials >= 1e4; cfg must already carry
/// the scheme, bit budget, period, delta and phi (thresholds are ignored).
CalibrationResult calibrate_thresholds(const SchemeConfig& cfg,
                                       std::span<const DetectorModel> models,
                                       double target_alpha, double target_beta,
                                       int64_t n_trials, int64_t horizon, uint64_t seed,
                                       int workers, const CalibrationSettings& settings = {});

/// Calibrates thresholds so the mean decision delays match the given targets
/// (largest thresholds with achieved delay <= target); reports the error
/// probabilities attained there. Used by the operating-characteristic sweep.
CalibrationResult calibrate_delay_thresholds(const SchemeConfig& cfg,
                                             std::span<const DetectorModel> models,
                                             double target_delay_h0, double target_delay_h1,
                                             int64_t n_trials, int64_t horizon, uint64_t seed,
                                             int workers,
                                             const CalibrationSettings& settings = {});

/// Long-run level-triggered message rate, in messages per unit time summed
/// over all SUs, measured with no FC stopping.
double measure_message_rate(std::span<const DetectorModel> models, Hypothesis hyp,
                            double delta, int64_t horizon, uint64_t seed);

/// One calibrated operating point, as persisted in the calibration manifest.
struct ManifestEntry {
    std::string scheme;
    int s_bits = 0;
    int period = 4;
    int k_users = 1;
    std::vector<DetectorModel> models;
    double target_alpha = 0.0, target_beta = 0.0;
    double target_delay_h0 = -1.0, target_delay_h1 = -1.0;  // -1 when unused
    double kl_h0 = 0.0, kl_h1 = 0.0, phi = 0.0, delta = 0.0;
    double a = 0.0, b = 0.0;
    double achieved_alpha = 0.0, achieved_alpha_se = 0.0;
    double achieved_beta = 0.0, achieved_beta_se = 0.0;
    double message_rate_h0 = 0.0, message_rate_h1 = 0.0;
    uint64_t seed = 0;
};

struct CalibrationManifest {
    std::vector<ManifestEntry> entries;

    const ManifestEntry* find(std::string_view scheme, int s_bits, int period, int k_users,
                              std::span<const DetectorModel> models, double target_alpha,
                              double target_beta, double target_delay_h0 = -1.0,
                              double target_delay_h1 = -1.0) const;
};

void save_manifest(const CalibrationManifest& manifest, const std::string& path);
/// Throws std::runtime_error (message names the path) when missing or invalid.
CalibrationManifest load_manifest(const std::string& path);

}  // namespace seqsense
