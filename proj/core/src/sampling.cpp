#include "seqsense/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace seqsense {

namespace {

// One ulp-ish below phi: keeps floor(q r_hat / phi) <= r_hat - 1 after clipping.
double clip_overshoot(double q, double phi) {
    return std::min(q, phi * (1.0 - 0x1.0p-52));
}

}  // namespace

int message_bits(int r_hat) {
    if (r_hat < 0) throw std::invalid_argument("message_bits: r_hat must be >= 0");
    return 1 + std::bit_width(static_cast<unsigned>(r_hat));
}

uint32_t pack_message(const SuMessage& m, int r_hat) {
    assert(m.level >= 0 && m.level <= r_hat);
    assert(m.sign == 1 || m.sign == -1);
    const int level_bits = message_bits(r_hat) - 1;
    const uint32_t sign_bit = m.sign > 0 ? 1u : 0u;
    return (sign_bit << level_bits) | static_cast<uint32_t>(m.level);
}

SuMessage unpack_message(uint32_t word, int r_hat, int64_t time, int su_id) {
    const int level_bits = message_bits(r_hat) - 1;
    const uint32_t level_mask = (1u << level_bits) - 1u;
    SuMessage m;
    m.time = time;
    m.su_id = su_id;
    m.sign = (word >> level_bits) & 1u ? +1 : -1;
    m.level = static_cast<int>(word & level_mask);
    return m;
}

double quantize_lower_probability(double q, int r_hat, double phi) {
    if (r_hat < 1) throw std::invalid_argument("quantize: r_hat must be >= 1");
    if (!(phi > 0.0)) throw std::invalid_argument("quantize: phi must be positive");
    if (!(q >= 0.0) || q >= phi)
        throw std::invalid_argument("quantize: overshoot outside [0, phi); clip first");
    const double eps_hat = phi / static_cast<double>(r_hat);
    const double m = std::floor(q / eps_hat);
    // p = (1 - e^{q - (m+1) eps}) / (1 - e^{-eps}), written with expm1 so the
    // ratio stays accurate for fine lattices.
    const double p = std::expm1(q - (m + 1.0) * eps_hat) / std::expm1(-eps_hat);
    assert(p >= 0.0 && p <= 1.0 + 1e-12);
    return std::min(p, 1.0);
}

int randomized_quantize(double q, int r_hat, double phi, Rng& rng) {
    const double eps_hat = phi / static_cast<double>(r_hat);
    const double p = quantize_lower_probability(q, r_hat, phi);
    const int m = static_cast<int>(std::floor(q / eps_hat));
    return rng.uniform() < p ? m : m + 1;
}

double reconstruct_increment(const SuMessage& m, double delta, double phi, int r_hat) {
    const double sign = m.sign > 0 ? 1.0 : -1.0;
    if (r_hat == 0) return sign * delta;
    return sign * (delta + static_cast<double>(m.level) * phi / static_cast<double>(r_hat));
}

LtSampler::LtSampler(int su_id, double delta, double phi, int r_hat)
    : su_id_(su_id), delta_(delta), phi_(phi), r_hat_(r_hat) {
    if (!(delta > 0.0)) throw std::invalid_argument("LtSampler: delta must be positive");
    if (!(phi > 0.0)) throw std::invalid_argument("LtSampler: phi must be positive");
    if (r_hat < 0) throw std::invalid_argument("LtSampler: r_hat must be >= 0");
}

void LtSampler::reset() {
    accumulator_ = 0.0;
    last_sample_time_ = 0;
}

std::optional<SuMessage> LtSampler::step(double llr_increment, int64_t t, Rng& rng) {
    accumulator_ += llr_increment;
    if (accumulator_ > -delta_ && accumulator_ < delta_) return std::nullopt;
    SuMessage msg;
    msg.time = t;
    msg.su_id = su_id_;
    msg.sign = accumulator_ >= 0.0 ? +1 : -1;
    if (r_hat_ >= 1) {
        const double q = clip_overshoot(std::abs(accumulator_) - delta_, phi_);
        msg.level = randomized_quantize(q, r_hat_, phi_, rng);
    }
    accumulator_ = 0.0;
    last_sample_time_ = t;
    return msg;
}

UniformWindowSampler::UniformWindowSampler(int period, double phi, int r_tilde)
    : period_(period), phi_(phi), r_tilde_(r_tilde) {
    if (period < 1) throw std::invalid_argument("UniformWindowSampler: period must be >= 1");
    if (!(phi > 0.0)) throw std::invalid_argument("UniformWindowSampler: phi must be positive");
    if (r_tilde < 1) throw std::invalid_argument("UniformWindowSampler: r_tilde must be >= 1");
}

void UniformWindowSampler::reset() { window_sum_ = 0.0; }

double UniformWindowSampler::quantize_window(double lambda) const {
    const double bound = static_cast<double>(period_) * phi_;
    const double r = static_cast<double>(r_tilde_);
    // Clip to just inside (-T phi, T phi): |l_t| > phi is a quantile-rare event
    // and the cell index must stay within [0, r_tilde - 1].
    const double edge = bound * (1.0 - 0x1.0p-52);
    const double clipped = std::clamp(lambda, -edge, edge);
    const double cell = std::floor(r * (clipped + bound) / (2.0 * bound));
    return -bound + bound / r + cell * (2.0 * bound / r);
}

std::optional<double> UniformWindowSampler::step(double llr_increment, int64_t t) {
    window_sum_ += llr_increment;
    if (t % period_ != 0) return std::nullopt;
    const double quantized = quantize_window(window_sum_);
    window_sum_ = 0.0;
    return quantized;
}

}  // namespace seqsense
