#pragma once

// Test-side oracles, independent of the library implementations they check.

#include <cmath>
#include <cstdint>
#include <vector>

namespace seqsense::testing {

/// Power-series log I0 evaluated in extended precision; reference for the
/// energy-detector LLR up to moderate arguments (series-only, no crossover).
inline double oracle_log_i0(double x) {
    const long double q = 0.25L * static_cast<long double>(x) * static_cast<long double>(x);
    long double term = 1.0L;
    long double sum = 1.0L;
    for (int k = 1; k < 200; ++k) {
        term *= q / (static_cast<long double>(k) * static_cast<long double>(k));
        sum += term;
        if (term < sum * 1e-22L) break;
    }
    return static_cast<double>(std::log(sum));
}

/// Exhaustive enumeration of every +-step path of a Bernoulli LLR walk with
/// exit thresholds (-b, a) and a finite horizon. Path probabilities are the
/// full-length products, which is exact because suffix probabilities sum to
/// one past the exit. Index t of stop_pmf_* is the stopping time (0 unused).
struct WalkEnumeration {
    double alpha = 0.0;  // P0(decide H1)
    double beta = 0.0;   // P1(decide H0)
    std::vector<double> stop_pmf_h0, stop_pmf_h1;
    double censored_h0 = 0.0, censored_h1 = 0.0;
    double mean_delay_h0 = 0.0, mean_delay_h1 = 0.0;  // conditional on stopping
};

inline WalkEnumeration enumerate_bernoulli_walk(double step, double a, double b, int horizon) {
    const double p1_up = 1.0 / (1.0 + std::exp(-step));  // P1(+step); P0(+step) = 1 - p1_up
    WalkEnumeration out;
    out.stop_pmf_h0.assign(static_cast<size_t>(horizon) + 1, 0.0);
    out.stop_pmf_h1.assign(static_cast<size_t>(horizon) + 1, 0.0);
    double delay_mass_h0 = 0.0, delay_sum_h0 = 0.0;
    double delay_mass_h1 = 0.0, delay_sum_h1 = 0.0;

    const uint64_t n_paths = uint64_t{1} << horizon;
    for (uint64_t path = 0; path < n_paths; ++path) {
        double llr = 0.0;
        double prob_h0 = 1.0, prob_h1 = 1.0;
        int stop_t = 0;
        int decision = -1;  // 0, 1, or -1 when censored
        for (int t = 0; t < horizon; ++t) {
            const bool up = (path >> t) & 1u;
            prob_h0 *= up ? 1.0 - p1_up : p1_up;
            prob_h1 *= up ? p1_up : 1.0 - p1_up;
            if (decision >= 0) continue;  // past the exit; suffix just weights
            llr += up ? step : -step;
            if (llr >= a) {
                decision = 1;
                stop_t = t + 1;
            } else if (llr <= -b) {
                decision = 0;
                stop_t = t + 1;
            }
        }
        if (decision < 0) {
            out.censored_h0 += prob_h0;
            out.censored_h1 += prob_h1;
            continue;
        }
        if (decision == 1) out.alpha += prob_h0;
        if (decision == 0) out.beta += prob_h1;
        out.stop_pmf_h0[static_cast<size_t>(stop_t)] += prob_h0;
        out.stop_pmf_h1[static_cast<size_t>(stop_t)] += prob_h1;
        delay_mass_h0 += prob_h0;
        delay_sum_h0 += prob_h0 * stop_t;
        delay_mass_h1 += prob_h1;
        delay_sum_h1 += prob_h1 * stop_t;
    }
    out.mean_delay_h0 = delay_sum_h0 / delay_mass_h0;
    out.mean_delay_h1 = delay_sum_h1 / delay_mass_h1;
    return out;
}

inline double binomial_se(double p, double n) { return std::sqrt(p * (1.0 - p) / n); }

}  // namespace seqsense::testing
