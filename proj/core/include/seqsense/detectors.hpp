#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "seqsense/rng.hpp"
#include "seqsense/stats.hpp"

namespace seqsense {

enum class Hypothesis : int { H0 = 0, H1 = 1 };

inline Hypothesis opposite(Hypothesis h) {
    return h == Hypothesis::H0 ? Hypothesis::H1 : Hypothesis::H0;
}

/// Energy detector: under H1 the normalized sample energy gamma follows a
/// noncentral chi-squared with 2 d.o.f. and noncentrality theta (SNR = theta/2).
struct EnergyDetectorParams {
    double theta = 0.0;
    bool operator==(const EnergyDetectorParams&) const = default;
};

/// Spectral-shape detector: H0 is circular white noise with variance sigma_w2,
/// H1 a stable AR(p) process driven by circular noise with variance sigma_v2.
struct SpectralShapeParams {
    std::vector<double> ar_coeffs;  // a_1 .. a_p
    double sigma_w2 = 1.0;
    double sigma_v2 = 1.0;
    bool operator==(const SpectralShapeParams&) const = default;
};

/// Gaussian detector: circular complex Gaussian samples whose variance grows
/// from sigma_w2 to rho2 + sigma_w2 under H1.
struct GaussianDetectorParams {
    double rho2 = 0.0;
    double sigma_w2 = 1.0;
    bool operator==(const GaussianDetectorParams&) const = default;
};

/// Synthetic stream with l identically equal to `value` under both hypotheses.
struct ConstantLlrParams {
    double value = 0.0;
    bool operator==(const ConstantLlrParams&) const = default;
};

/// Synthetic two-point walk l = +-step. The step probabilities are chosen so
/// that l is the exact LLR of the draw: P1(+step) = e^step / (1 + e^step) and
/// P0(+step) = 1 / (1 + e^step).
struct BernoulliLlrParams {
    double step = 1.0;
    bool operator==(const BernoulliLlrParams&) const = default;
};

using DetectorModel = std::variant<EnergyDetectorParams, SpectralShapeParams,
                                   GaussianDetectorParams, ConstantLlrParams,
                                   BernoulliLlrParams>;

/// Throws std::invalid_argument on bad parameters (negative variances, empty
/// or unstable AR polynomial, nonpositive Bernoulli step, non-finite values).
void validate_model(const DetectorModel& model);

/// True when every root of z^p - a_1 z^(p-1) - ... - a_p lies strictly inside
/// the unit circle (Schur-Cohn reduction).
bool ar_polynomial_stable(std::span<const double> ar_coeffs);

/// KL information numbers and the LLR magnitude bound phi consumed by the
/// quantizers, together with the Monte Carlo standard errors of the means.
struct ModelConstants {
    double kl_h0 = 0.0;  // |E0[l]|
    double kl_h1 = 0.0;  // |E1[l]|
    double phi = 0.0;    // empirical high quantile of |l|
    double kl_h0_se = 0.0;
    double kl_h1_se = 0.0;
};

/// log I0(x), overflow-safe: power series up to the crossover x = 20, scaled
/// asymptotic expansion beyond it. Both branches agree to about 1e-13 at the
/// crossover.
double log_bessel_i0(double x);

/// Energy detector increment log I0(sqrt(theta * gamma)) - theta / 2.
double llr_energy(const EnergyDetectorParams& p, double gamma);

/// Spectral-shape increment; history[i] = y_{t-1-i}, zero-padded at the start
/// of the stream, with history.size() >= p.
double llr_spectral(const SpectralShapeParams& p, std::complex<double> y_t,
                    std::span<const std::complex<double>> history);

/// Gaussian detector increment as an affine function of |y|^2.
double llr_gaussian(const GaussianDetectorParams& p, double y_abs2);

double sample_energy(const EnergyDetectorParams& p, Hypothesis hyp, Rng& rng);
std::complex<double> sample_spectral(const SpectralShapeParams& p, Hypothesis hyp,
                                     std::span<const std::complex<double>> history, Rng& rng);
std::complex<double> sample_gaussian(const GaussianDetectorParams& p, Hypothesis hyp, Rng& rng);

/// Per-SU observation/LLR stream. Owns the sample history the spectral-shape
/// model needs and caches the per-model constants of the LLR formulas. Draws
/// from the supplied RNG in a fixed order, so a trial that owns its RNG is
/// fully reproducible.
class SuDetector {
public:
    explicit SuDetector(DetectorModel model);

    /// Generates the next observation under `hyp` and returns its LLR increment.
    double next_llr(Hypothesis hyp, Rng& rng);

    void reset();
    const DetectorModel& model() const { return model_; }

private:
    DetectorModel model_;
    std::vector<std::complex<double>> history_;  // newest first; spectral shape only
    double gauss_slope_ = 0.0;                   // rho2 / (sw2 (rho2 + sw2))
    double gauss_offset_ = 0.0;                  // log(sw2 / (rho2 + sw2))
    double spectral_log_ratio_ = 0.0;            // log(sw2 / sv2)
    double bernoulli_p1_ = 0.0;                  // P1(+step)
};

/// Monte Carlo estimate of the model constants: kl_hi = |mean of l under Hi|
/// over n_samples draws per hypothesis, phi the (1 - quantile) nearest-rank
/// quantile of |l| pooled over both hypotheses. Throws std::invalid_argument
/// on bad arguments and std::runtime_error when an estimated KL number is
/// within 3 standard errors of zero (indistinguishable hypotheses).
ModelConstants estimate_constants(const DetectorModel& model, int64_t n_samples,
                                  double quantile, Rng& rng);

}  // namespace seqsense
