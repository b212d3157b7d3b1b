#include "seqsense/detectors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace seqsense {

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::complex<double> circular_complex_normal(double variance, Rng& rng) {
    // Two independent real components with variance/2 each.
    const double s = std::sqrt(0.5 * variance);
    const double re = s * rng.normal();
    const double im = s * rng.normal();
    return {re, im};
}

}  // namespace

bool ar_polynomial_stable(std::span<const double> ar_coeffs) {
    // Characteristic polynomial z^p - a_1 z^(p-1) - ... - a_p, reduced by the
    // Schur-Cohn recursion; stable iff |c_n| < |c_0| at every stage.
    std::vector<double> c(ar_coeffs.size() + 1);
    c[0] = 1.0;
    for (size_t i = 0; i < ar_coeffs.size(); ++i) c[i + 1] = -ar_coeffs[i];
    while (c.size() > 1) {
        const size_t n = c.size() - 1;
        if (std::abs(c[n]) >= std::abs(c[0])) return false;
        std::vector<double> b(n);
        for (size_t i = 0; i < n; ++i) b[i] = c[0] * c[i] - c[n] * c[n - i];
        c = std::move(b);
    }
    return true;
}

void validate_model(const DetectorModel& model) {
    std::visit(
        [](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, EnergyDetectorParams>) {
                if (!(std::isfinite(p.theta) && p.theta >= 0.0))
                    throw std::invalid_argument("energy model: theta must be finite and >= 0");
            } else if constexpr (std::is_same_v<T, SpectralShapeParams>) {
                if (p.ar_coeffs.empty())
                    throw std::invalid_argument("spectral model: AR order must be >= 1");
                if (!all_finite(p.ar_coeffs))
                    throw std::invalid_argument("spectral model: AR coefficients must be finite");
                if (!(std::isfinite(p.sigma_w2) && p.sigma_w2 > 0.0) ||
                    !(std::isfinite(p.sigma_v2) && p.sigma_v2 > 0.0))
                    throw std::invalid_argument("spectral model: variances must be positive");
                if (!ar_polynomial_stable(p.ar_coeffs))
                    throw std::invalid_argument("spectral model: AR polynomial is not stable");
            } else if constexpr (std::is_same_v<T, GaussianDetectorParams>) {
                if (!(std::isfinite(p.rho2) && p.rho2 >= 0.0))
                    throw std::invalid_argument("gaussian model: rho2 must be finite and >= 0");
                if (!(std::isfinite(p.sigma_w2) && p.sigma_w2 > 0.0))
                    throw std::invalid_argument("gaussian model: sigma_w2 must be positive");
            } else if constexpr (std::is_same_v<T, ConstantLlrParams>) {
                if (!std::isfinite(p.value))
                    throw std::invalid_argument("constant model: value must be finite");
            } else if constexpr (std::is_same_v<T, BernoulliLlrParams>) {
                if (!(std::isfinite(p.step) && p.step > 0.0))
                    throw std::invalid_argument("bernoulli model: step must be positive");
            }
        },
        model);
}

double log_bessel_i0(double x) {
    x = std::abs(x);
    if (x == 0.0) return 0.0;
    if (x <= 20.0) {
        // Power series I0(x) = sum_k (x^2/4)^k / (k!)^2; no overflow below the
        // crossover (largest term ~8e6 at x = 20).
        const double q = 0.25 * x * x;
        double term = 1.0;
        double sum = 1.0;
        for (int k = 1; k < 80; ++k) {
            term *= q / (static_cast<double>(k) * static_cast<double>(k));
            sum += term;
            if (term <= sum * 1e-17) break;
        }
        return std::log(sum);
    }
    // Scaled asymptotic expansion: I0(x) = e^x / sqrt(2 pi x) * S(x) with
    // S = sum_k c_k, c_k = c_{k-1} (2k-1)^2 / (8 k x). Fourteen terms leave
    // a relative error around 4e-14 at x = 20 and smaller beyond.
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k <= 14; ++k) {
        const double odd = 2.0 * static_cast<double>(k) - 1.0;
        term *= odd * odd / (8.0 * static_cast<double>(k) * x);
        sum += term;
        if (term <= sum * 1e-17) break;
    }
    return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(sum);
}

double llr_energy(const EnergyDetectorParams& p, double gamma) {
    assert(gamma >= 0.0);
    return log_bessel_i0(std::sqrt(p.theta * gamma)) - 0.5 * p.theta;
}

double llr_spectral(const SpectralShapeParams& p, std::complex<double> y_t,
                    std::span<const std::complex<double>> history) {
    assert(history.size() >= p.ar_coeffs.size());
    std::complex<double> pred{0.0, 0.0};
    for (size_t i = 0; i < p.ar_coeffs.size(); ++i) pred += p.ar_coeffs[i] * history[i];
    const std::complex<double> innov = y_t - pred;
    return std::norm(y_t) / p.sigma_w2 - std::norm(innov) / p.sigma_v2 +
           std::log(p.sigma_w2 / p.sigma_v2);
}

double llr_gaussian(const GaussianDetectorParams& p, double y_abs2) {
    assert(y_abs2 >= 0.0);
    const double total = p.rho2 + p.sigma_w2;
    return p.rho2 / (p.sigma_w2 * total) * y_abs2 + std::log(p.sigma_w2 / total);
}

double sample_energy(const EnergyDetectorParams& p, Hypothesis hyp, Rng& rng) {
    // gamma = |z + mu|^2 with z a pair of unit normals; mu^2 is the noncentrality.
    const double mu = hyp == Hypothesis::H1 ? std::sqrt(p.theta) : 0.0;
    const double z1 = rng.normal() + mu;
    const double z2 = rng.normal();
    return z1 * z1 + z2 * z2;
}

std::complex<double> sample_spectral(const SpectralShapeParams& p, Hypothesis hyp,
                                     std::span<const std::complex<double>> history, Rng& rng) {
    if (hyp == Hypothesis::H0) return circular_complex_normal(p.sigma_w2, rng);
    assert(history.size() >= p.ar_coeffs.size());
    std::complex<double> y = circular_complex_normal(p.sigma_v2, rng);
    for (size_t i = 0; i < p.ar_coeffs.size(); ++i) y += p.ar_coeffs[i] * history[i];
    return y;
}

std::complex<double> sample_gaussian(const GaussianDetectorParams& p, Hypothesis hyp, Rng& rng) {
    const double variance = hyp == Hypothesis::H1 ? p.rho2 + p.sigma_w2 : p.sigma_w2;
    return circular_complex_normal(variance, rng);
}

SuDetector::SuDetector(DetectorModel model) : model_(std::move(model)) {
    validate_model(model_);
    if (const auto* g = std::get_if<GaussianDetectorParams>(&model_)) {
        const double total = g->rho2 + g->sigma_w2;
        gauss_slope_ = g->rho2 / (g->sigma_w2 * total);
        gauss_offset_ = std::log(g->sigma_w2 / total);
    } else if (const auto* s = std::get_if<SpectralShapeParams>(&model_)) {
        spectral_log_ratio_ = std::log(s->sigma_w2 / s->sigma_v2);
        history_.assign(s->ar_coeffs.size(), {0.0, 0.0});
    } else if (const auto* b = std::get_if<BernoulliLlrParams>(&model_)) {
        bernoulli_p1_ = 1.0 / (1.0 + std::exp(-b->step));
    }
}

void SuDetector::reset() {
    std::fill(history_.begin(), history_.end(), std::complex<double>{0.0, 0.0});
}

double SuDetector::next_llr(Hypothesis hyp, Rng& rng) {
    switch (model_.index()) {
        case 0: {  // energy
            const auto& p = std::get<EnergyDetectorParams>(model_);
            return llr_energy(p, sample_energy(p, hyp, rng));
        }
        case 1: {  // spectral shape
            const auto& p = std::get<SpectralShapeParams>(model_);
            const std::complex<double> y = sample_spectral(p, hyp, history_, rng);
            std::complex<double> pred{0.0, 0.0};
            for (size_t i = 0; i < p.ar_coeffs.size(); ++i) pred += p.ar_coeffs[i] * history_[i];
            const double l = std::norm(y) / p.sigma_w2 - std::norm(y - pred) / p.sigma_v2 +
                             spectral_log_ratio_;
            // shift history, newest first
            for (size_t i = history_.size() - 1; i > 0; --i) history_[i] = history_[i - 1];
            history_[0] = y;
            return l;
        }
        case 2: {  // gaussian
            const auto& p = std::get<GaussianDetectorParams>(model_);
            return gauss_slope_ * std::norm(sample_gaussian(p, hyp, rng)) + gauss_offset_;
        }
        case 3:
            return std::get<ConstantLlrParams>(model_).value;
        default: {  // bernoulli
            const auto& p = std::get<BernoulliLlrParams>(model_);
            const double p_up = hyp == Hypothesis::H1 ? bernoulli_p1_ : 1.0 - bernoulli_p1_;
            return rng.uniform() < p_up ? p.step : -p.step;
        }
    }
}

ModelConstants estimate_constants(const DetectorModel& model, int64_t n_samples,
                                  double quantile, Rng& rng) {
    if (n_samples < 100000)
        throw std::invalid_argument("estimate_constants: n_samples must be >= 1e5");
    if (!(quantile > 0.0 && quantile < 1.0))
        throw std::invalid_argument("estimate_constants: quantile must lie in (0, 1)");
    validate_model(model);

    RunningStat stat[2];
    std::vector<double> abs_pool;
    abs_pool.reserve(static_cast<size_t>(2 * n_samples));
    for (Hypothesis hyp : {Hypothesis::H0, Hypothesis::H1}) {
        SuDetector det(model);
        auto& s = stat[static_cast<int>(hyp)];
        for (int64_t i = 0; i < n_samples; ++i) {
            const double l = det.next_llr(hyp, rng);
            s.add(l);
            abs_pool.push_back(std::abs(l));
        }
    }

    ModelConstants c;
    c.kl_h0 = std::abs(stat[0].mean);
    c.kl_h1 = std::abs(stat[1].mean);
    c.kl_h0_se = stat[0].standard_error();
    c.kl_h1_se = stat[1].standard_error();
    if (c.kl_h0 <= 3.0 * c.kl_h0_se || c.kl_h1 <= 3.0 * c.kl_h1_se)
        throw std::runtime_error(
            "estimate_constants: hypotheses statistically indistinguishable "
            "(KL estimate within 3 SE of zero)");
    c.phi = nearest_rank_quantile(std::move(abs_pool), 1.0 - quantile);
    if (c.phi < std::max(c.kl_h0, c.kl_h1))
        throw std::runtime_error("estimate_constants: phi below a KL number; quantile too low");
    return c;
}

}  // namespace seqsense
