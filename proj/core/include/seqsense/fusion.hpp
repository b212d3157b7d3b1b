#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "seqsense/detectors.hpp"
#include "seqsense/sampling.hpp"

namespace seqsense {

enum class Scheme { Centralized, QSprt, RltSprt };

std::string_view scheme_name(Scheme s);
std::optional<Scheme> scheme_from_name(std::string_view name);

/// Two-sided SPRT exit thresholds: continue while the statistic stays in
/// (-b, a); both magnitudes are positive.
struct SprtThresholds {
    double a = 1.0;
    double b = 1.0;
};

/// Everything a trial needs to run one scheme: the scheme selector, the
/// per-message bit budget, the synchronous period T, the local threshold
/// delta, the LLR bound phi shared by SU and FC, and the FC thresholds.
struct SchemeConfig {
    Scheme scheme = Scheme::Centralized;
    int s_bits = 1;
    int period = 4;
    double delta = 1.0;
    double phi = 1.0;
    SprtThresholds thresholds;

    int r_tilde() const { return 1 << s_bits; }
    int r_hat() const { return (1 << (s_bits - 1)) - 1; }

    /// Bits per transmission: log2(r_tilde) = s for Q-SPRT, the packed
    /// sign + level encoding (also s) for RLT, a nominal 64-bit float for the
    /// centralized baseline.
    int bits_per_message() const {
        if (scheme == Scheme::Centralized) return 64;
        if (scheme == Scheme::RltSprt) return message_bits(r_hat());
        return s_bits;
    }
};

struct Verdict {
    std::optional<Hypothesis> decision;
    int64_t stop_time = 0;
};

/// FC running state. For 1-bit RLT the statistic is maintained as the integer
/// sum of received sign bits (llr = bit_sum * delta), which keeps the lattice
/// structure exact.
struct FusionState {
    Scheme scheme = Scheme::Centralized;
    double llr = 0.0;
    int64_t bit_sum = 0;
    int64_t message_count = 0;
    int64_t time = 0;
};

/// Centralized SPRT update with the exact summed increment; stops with H1 at
/// llr >= a, H0 at llr <= -b (closed exits).
std::optional<Verdict> centralized_step(FusionState& state, const SprtThresholds& thr,
                                        int64_t t, double sum_llr_increment);

/// Synchronous Q-SPRT update with one quantized window value per SU. Throws
/// std::logic_error when called off-period.
std::optional<Verdict> qsprt_step(FusionState& state, const SprtThresholds& thr, int period,
                                  int64_t t, std::span<const double> window_values);

/// Asynchronous RLT update: messages stamped t are processed one at a time in
/// ascending SU order, testing the thresholds after every single-message
/// update; the first exit stops immediately and discards the rest of the batch.
std::optional<Verdict> rlt_step(FusionState& state, const SprtThresholds& thr, double delta,
                                double phi, int r_hat, int64_t t,
                                std::span<const SuMessage> msgs);

struct TrialResult {
    std::optional<Hypothesis> decision;
    int64_t stop_time = 0;
    int64_t message_count = 0;
    int64_t bits_sent = 0;
    /// Exact centralized LLR of every observation generated up to stop_time;
    /// the change-of-measure weight for rare-event error estimation, kept even
    /// for the decentralized schemes.
    double centralized_llr_at_stop = 0.0;
    bool censored = false;

    bool operator==(const TrialResult&) const = default;
};

/// Runs one trial end to end: advances discrete time, draws K observations
/// per step, feeds samplers and the FC according to the scheme, and stops at
/// the configured thresholds or at the horizon (censored). Two RNG streams
/// are derived from trial_seed: one for observations, one for the quantizer
/// randomization, so schemes sharing a trial seed see identical observations.
TrialResult run_scheme(const SchemeConfig& cfg, std::span<const DetectorModel> models,
                       Hypothesis hyp, int64_t horizon, uint64_t trial_seed);

/// One FC statistic update: the time it landed, the statistic after applying
/// it, the exact centralized LLR of all observations up to that time, and the
/// cumulative message count.
struct FcEvent {
    int64_t time = 0;
    double fc_llr = 0.0;
    double exact_llr = 0.0;
    int64_t messages = 0;
};

/// A trial simulated out to wide recording bounds, with every FC update
/// recorded. Since SU sampling never depends on the FC thresholds, any
/// threshold pair inside the bounds can be replayed exactly on this record.
struct TrialPath {
    std::vector<FcEvent> events;
    bool exited = false;      // left (-bound_b, bound_a) before the horizon
    int64_t end_time = 0;     // exit time, or the horizon when censored
    double end_exact_llr = 0.0;
};

/// Simulates a trial to the recording bounds in cfg.thresholds and records
/// every FC update. Identical seeds give the run_scheme outcome for any
/// smaller thresholds via replay_path.
TrialPath record_fc_path(const SchemeConfig& cfg, std::span<const DetectorModel> models,
                         Hypothesis hyp, int64_t horizon, uint64_t trial_seed);

/// First-exit scan of a recorded path at thresholds no wider than the
/// recording bounds; bit-identical to running the trial directly.
TrialResult replay_path(const TrialPath& path, const SprtThresholds& thr,
                        int bits_per_message);

}  // namespace seqsense
