#pragma once

#include <cstdint>
#include <optional>

#include "seqsense/rng.hpp"

namespace seqsense {

/// One asynchronous SU -> FC transmission: the sign of the crossed boundary
/// and the overshoot quantized onto the lattice level * phi / r_hat.
struct SuMessage {
    int64_t time = 0;
    int su_id = 0;
    int sign = +1;  // +1 upper boundary, -1 lower
    int level = 0;  // in [0, r_hat]; always 0 in 1-bit mode

    bool operator==(const SuMessage&) const = default;
};

/// Bits of the canonical packed encoding: 1 sign bit + ceil(log2(1 + r_hat))
/// level bits.
int message_bits(int r_hat);

/// Packs sign and level into the canonical wire word (level bits low, sign on top).
uint32_t pack_message(const SuMessage& m, int r_hat);
SuMessage unpack_message(uint32_t word, int r_hat, int64_t time, int su_id);

/// Probability of taking the lower lattice point in the two-point randomized
/// quantization of an overshoot q in [0, phi). Chosen so that the quantized
/// likelihood ratio never exceeds the exact one in expectation, for either sign.
double quantize_lower_probability(double q, int r_hat, double phi);

/// Two-point randomized quantization: returns the lattice index m = floor(q
/// r_hat / phi) with probability quantize_lower_probability, else m + 1.
/// Requires 0 <= q < phi (callers clip first); throws std::invalid_argument
/// otherwise.
int randomized_quantize(double q, int r_hat, double phi, Rng& rng);

/// FC-side recovery of the local LLR increment: sign * (delta + level * phi /
/// r_hat); plain sign * delta in 1-bit mode (r_hat == 0).
double reconstruct_increment(const SuMessage& m, double delta, double phi, int r_hat);

/// Level-triggered sampler. Accumulates LLR increments and emits a message
/// whenever the running sum leaves (-delta, delta); the boundary itself emits.
/// The overshoot is clipped just below phi before quantization so the lattice
/// index stays within [0, r_hat].
class LtSampler {
public:
    LtSampler(int su_id, double delta, double phi, int r_hat);

    std::optional<SuMessage> step(double llr_increment, int64_t t, Rng& rng);

    double accumulator() const { return accumulator_; }
    int64_t last_sample_time() const { return last_sample_time_; }
    double delta() const { return delta_; }
    void reset();

private:
    int su_id_;
    double delta_;
    double phi_;
    int r_hat_;
    double accumulator_ = 0.0;
    int64_t last_sample_time_ = 0;
};

/// Synchronous window accumulator: sums increments over periods of length T
/// and emits the midpoint-quantized window LLR on the r_tilde-cell uniform
/// partition of (-T phi, T phi).
class UniformWindowSampler {
public:
    UniformWindowSampler(int period, double phi, int r_tilde);

    /// Adds l_t; at t % period == 0 returns the quantized window value and
    /// resets the window.
    std::optional<double> step(double llr_increment, int64_t t);

    /// Midpoint quantization of a window sum (exposed for direct checks).
    double quantize_window(double lambda) const;

    double window_sum() const { return window_sum_; }
    int period() const { return period_; }
    void reset();

private:
    int period_;
    double phi_;
    int r_tilde_;
    double window_sum_ = 0.0;
};

}  // namespace seqsense
