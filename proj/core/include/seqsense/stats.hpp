#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace seqsense {

/// Welford accumulator for mean / variance / standard error of the mean.
struct RunningStat {
    int64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double d = x - mean;
        mean += d / static_cast<double>(count);
        m2 += d * (x - mean);
    }

    double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
    double stddev() const { return std::sqrt(variance()); }
    double standard_error() const {
        return count > 0 ? stddev() / std::sqrt(static_cast<double>(count)) : 0.0;
    }
};

/// A point estimate with its Monte Carlo standard error.
struct ErrorEstimate {
    double value = 0.0;
    double se = 0.0;
};

/// Nearest-rank empirical quantile (1-indexed rank ceil(p * n)).
inline double nearest_rank_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sample");
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level outside (0, 1]");
    const auto n = static_cast<int64_t>(values.size());
    auto rank = static_cast<int64_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::clamp<int64_t>(rank, 1, n);
    std::nth_element(values.begin(), values.begin() + (rank - 1), values.end());
    return values[rank - 1];
}

/// H(x, y) = x log(x / (1 - y)) + (1 - x) log((1 - x) / y); the binary
/// divergence that drives the sequential delay lower bounds.
inline double h_divergence(double x, double y) {
    if (!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0))
        throw std::domain_error("h_divergence: arguments must lie in (0, 1)");
    return x * std::log(x / (1.0 - y)) + (1.0 - x) * std::log((1.0 - x) / y);
}

inline double combined_se(double se_a, double se_b) {
    return std::sqrt(se_a * se_a + se_b * se_b);
}

}  // namespace seqsense
