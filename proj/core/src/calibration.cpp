#include "seqsense/calibration.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "model_json.hpp"
#include "parallel.hpp"

namespace seqsense {

namespace {

constexpr uint64_t kEnsembleTrialTag = 0x70617468;  // path trial streams
constexpr uint64_t kConstantsTag = 0x636f6e73;      // constants estimation
constexpr uint64_t kRateTag = 0x72617465;           // message-rate measurement

double wald_threshold(double target) { return -std::log(target); }

}  // namespace

std::pair<int, int> bits_to_levels(const BitBudget& budget) {
    if (budget.s < 1 || budget.s > 24)
        throw std::invalid_argument("bits_to_levels: s must lie in [1, 24]");
    return {1 << budget.s, (1 << (budget.s - 1)) - 1};
}

double solve_delta(int t_period, double kl) {
    if (t_period < 1) throw std::invalid_argument("solve_delta: period must be >= 1");
    if (!(std::isfinite(kl) && kl >= 0.0))
        throw std::invalid_argument("solve_delta: kl must be finite and >= 0");
    const double c = static_cast<double>(t_period) * kl;
    if (c == 0.0) return 0.0;
    const auto f = [](double d) { return d * std::tanh(0.5 * d); };
    // f(d) <= min(d, d^2/2), so the root always lies in [0, c + 2].
    double lo = 0.0, hi = c + 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (f(mid) < c ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

double delay_lower_bound(double alpha, double beta, double kl, int k_users, Hypothesis hyp) {
    if (!(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0))
        throw std::domain_error("delay_lower_bound: error probabilities must lie in (0, 1)");
    if (alpha + beta > 1.0)
        throw std::domain_error("delay_lower_bound: alpha + beta must not exceed 1");
    if (!(kl > 0.0)) throw std::domain_error("delay_lower_bound: kl must be positive");
    if (k_users < 1) throw std::domain_error("delay_lower_bound: k_users must be >= 1");
    const double h = hyp == Hypothesis::H1 ? h_divergence(beta, alpha)
                                           : h_divergence(alpha, beta);
    return h / (static_cast<double>(k_users) * kl);
}

PooledConstants pooled_constants(std::span<const DetectorModel> models, int period,
                                 DeltaKl choice, int64_t n_samples, double quantile,
                                 uint64_t seed) {
    if (models.empty()) throw std::invalid_argument("pooled_constants: no models");
    PooledConstants out;
    for (size_t k = 0; k < models.size(); ++k) {
        Rng rng(derive_seed(seed, {kConstantsTag, k}));
        const ModelConstants c = estimate_constants(models[k], n_samples, quantile, rng);
        out.kl_h0 += c.kl_h0;
        out.kl_h1 += c.kl_h1;
        out.phi = std::max(out.phi, c.phi);
    }
    out.kl_h0 /= static_cast<double>(models.size());
    out.kl_h1 /= static_cast<double>(models.size());
    const double kl = choice == DeltaKl::H0   ? out.kl_h0
                      : choice == DeltaKl::H1 ? out.kl_h1
                                              : 0.5 * (out.kl_h0 + out.kl_h1);
    out.delta = solve_delta(period, kl);
    return out;
}

PathEnsemble::PathEnsemble(SchemeConfig cfg, std::vector<DetectorModel> models, Hypothesis hyp,
                           int64_t n_trials, int64_t horizon, uint64_t master_seed,
                           uint64_t stream_tag, int workers)
    : cfg_(std::move(cfg)),
      models_(std::move(models)),
      hyp_(hyp),
      n_trials_(n_trials),
      horizon_(horizon),
      master_seed_(master_seed),
      stream_tag_(stream_tag),
      workers_(workers) {
    if (n_trials_ < 1) throw std::invalid_argument("PathEnsemble: n_trials must be >= 1");
}

uint64_t PathEnsemble::trial_seed(int64_t trial_index) const {
    return derive_seed(master_seed_, {kEnsembleTrialTag, stream_tag_,
                                      static_cast<uint64_t>(hyp_),
                                      static_cast<uint64_t>(trial_index)});
}

void PathEnsemble::ensure_bounds(double a_max, double b_max) {
    if (!(a_max > 0.0 && b_max > 0.0))
        throw std::invalid_argument("PathEnsemble: bounds must be positive");
    if (a_max <= bound_a_ && b_max <= bound_b_ && !paths_.empty()) return;
    // Geometric growth caps the number of resimulations at the cost of a
    // modestly longer recorded tail.
    bound_a_ = std::max(a_max, 2.0 * bound_a_);
    bound_b_ = std::max(b_max, 2.0 * bound_b_);
    simulate();
}

void PathEnsemble::simulate() {
    paths_.assign(static_cast<size_t>(n_trials_), TrialPath{});
    SchemeConfig cfg = cfg_;
    cfg.thresholds = {bound_a_, bound_b_};
    detail::parallel_for(n_trials_, workers_, [&](int64_t begin, int64_t end) {
        for (int64_t i = begin; i < end; ++i)
            paths_[static_cast<size_t>(i)] =
                record_fc_path(cfg, models_, hyp_, horizon_, trial_seed(i));
    });
}

TrialResult PathEnsemble::replay(int64_t trial_index, const SprtThresholds& thr) const {
    assert(thr.a <= bound_a_ && thr.b <= bound_b_);
    return replay_path(paths_[static_cast<size_t>(trial_index)], thr, cfg_.bits_per_message());
}

PathEnsemble::Stats PathEnsemble::evaluate(const SprtThresholds& thr) const {
    assert(!paths_.empty());
    assert(thr.a <= bound_a_ && thr.b <= bound_b_);
    RunningStat delay, direct, is_weight;
    int64_t censored = 0;
    int64_t total_messages = 0;
    int64_t total_time = 0;
    const int bits = cfg_.bits_per_message();
    for (const auto& path : paths_) {
        const TrialResult r = replay_path(path, thr, bits);
        total_messages += r.message_count;
        total_time += r.stop_time;
        if (r.censored) {
            // zero-weight term in both error means; excluded from delays
            ++censored;
            direct.add(0.0);
            is_weight.add(0.0);
            continue;
        }
        delay.add(static_cast<double>(r.stop_time));
        direct.add(r.decision == opposite(hyp_) ? 1.0 : 0.0);
        double w = 0.0;
        if (r.decision == hyp_)
            w = hyp_ == Hypothesis::H1 ? std::exp(-r.centralized_llr_at_stop)
                                       : std::exp(r.centralized_llr_at_stop);
        is_weight.add(w);
    }
    Stats s;
    s.mean_delay = delay.mean;
    s.se_delay = delay.standard_error();
    s.err_direct = {direct.mean, direct.standard_error()};
    s.err_is = {is_weight.mean, is_weight.standard_error()};
    s.message_rate = total_time > 0
                         ? static_cast<double>(total_messages) / static_cast<double>(total_time)
                         : 0.0;
    s.censored_frac = static_cast<double>(censored) / static_cast<double>(n_trials_);
    s.n = n_trials_;
    return s;
}

namespace {

// Joint recording bounds for the H0/H1 ensembles of one calibration: both
// evaluate the same candidate threshold pairs.
struct EnsemblePair {
    PathEnsemble e0;
    PathEnsemble e1;

    void ensure(double a, double b) {
        e0.ensure_bounds(a, b);
        e1.ensure_bounds(a, b);
    }
};

struct BisectOutcome {
    double threshold = 0.0;
    ErrorEstimate achieved;
    bool floor = false;
};

// Shrinks [lo, hi] with value(lo) > target >= value(hi) under a pathwise
// monotone nonincreasing objective. Accepts the first candidate inside the
// band; a collapsed bracket means the achievable set skips the band (finite-
// bit lattice), in which case the hi side (achieved <= target) is returned.
template <typename Eval>
BisectOutcome bisect_monotone_error(Eval&& eval, double target, double init_hi,
                                    const CalibrationSettings& settings) {
    double lo = 0.0;
    double hi = init_hi;
    ErrorEstimate at_hi = eval(hi);
    int grow = 0;
    while (at_hi.value > target) {
        if (++grow > 60)
            throw std::runtime_error(
                "calibrate_thresholds: target error unreachable within the horizon");
        lo = hi;
        hi = hi * 1.6 + 0.5;
        at_hi = eval(hi);
    }
    for (int iter = 0; iter < settings.max_bisect_iters; ++iter) {
        if (at_hi.value >= target * (1.0 - settings.error_band) &&
            at_hi.value <= target * (1.0 + settings.error_band))
            return {hi, at_hi, false};
        if (hi - lo < 1e-9 * std::max(1.0, hi)) return {hi, at_hi, true};
        const double mid = 0.5 * (lo + hi);
        const ErrorEstimate at_mid = eval(mid);
        if (at_mid.value > target) {
            lo = mid;
        } else {
            hi = mid;
            at_hi = at_mid;
        }
    }
    return {hi, at_hi, true};
}

// Same bracket game for mean delay, which is pathwise monotone nondecreasing
// in the threshold; returns the largest threshold with delay <= target.
template <typename Eval>
BisectOutcome bisect_monotone_delay(Eval&& eval, double target, double init_hi,
                                    const CalibrationSettings& settings) {
    double lo = 0.0;
    double hi = init_hi;
    double at_hi = eval(hi);
    int grow = 0;
    while (at_hi <= target) {
        lo = hi;
        if (++grow > 60)
            return {hi, {at_hi, 0.0}, true};  // horizon-limited: keep the largest reachable
        hi = hi * 1.6 + 0.5;
        at_hi = eval(hi);
    }
    double at_lo = lo > 0.0 ? eval(lo) : 0.0;
    for (int iter = 0; iter < settings.max_bisect_iters; ++iter) {
        if (lo > 0.0 && at_lo >= target * (1.0 - settings.delay_band) &&
            at_lo <= target * (1.0 + settings.delay_band))
            return {lo, {at_lo, 0.0}, false};
        if (hi - lo < 1e-9 * std::max(1.0, hi)) return {lo, {at_lo, 0.0}, true};
        const double mid = 0.5 * (lo + hi);
        const double at_mid = eval(mid);
        if (at_mid > target) {
            hi = mid;
        } else {
            lo = mid;
            at_lo = at_mid;
        }
    }
    return {lo, {at_lo, 0.0}, true};
}

void fill_result_from_ensembles(CalibrationResult& out, const EnsemblePair& pair,
                                const SchemeConfig& cfg,
                                std::span<const DetectorModel> models, uint64_t seed) {
    const PathEnsemble::Stats s0 = pair.e0.evaluate(out.thresholds);
    const PathEnsemble::Stats s1 = pair.e1.evaluate(out.thresholds);
    out.achieved_alpha = s1.err_is;
    out.achieved_beta = s0.err_is;
    out.mean_delay_h0 = s0.mean_delay;
    out.se_delay_h0 = s0.se_delay;
    out.mean_delay_h1 = s1.mean_delay;
    out.se_delay_h1 = s1.se_delay;
    switch (cfg.scheme) {
        case Scheme::Centralized:
            out.message_rate_h0 = out.message_rate_h1 = static_cast<double>(models.size());
            break;
        case Scheme::QSprt:
            out.message_rate_h0 = out.message_rate_h1 =
                static_cast<double>(models.size()) / static_cast<double>(cfg.period);
            break;
        case Scheme::RltSprt: {
            const int64_t rate_horizon = 100000;
            out.message_rate_h0 = measure_message_rate(models, Hypothesis::H0, cfg.delta,
                                                       rate_horizon, derive_seed(seed, {kRateTag, 0}));
            out.message_rate_h1 = measure_message_rate(models, Hypothesis::H1, cfg.delta,
                                                       rate_horizon, derive_seed(seed, {kRateTag, 1}));
            break;
        }
    }
}

}  // namespace

CalibrationResult calibrate_thresholds(const SchemeConfig& cfg,
                                       std::span<const DetectorModel> models,
                                       double target_alpha, double target_beta,
                                       int64_t n_trials, int64_t horizon, uint64_t seed,
                                       int workers, const CalibrationSettings& settings) {
    if (!(target_alpha > 0.0 && target_beta > 0.0 && target_alpha + target_beta < 1.0))
        throw std::invalid_argument(
            "calibrate_thresholds: need 0 < alpha, beta and alpha + beta < 1");
    if (n_trials < 10000)
        throw std::invalid_argument("calibrate_thresholds: n_trials must be >= 1e4");

    EnsemblePair pair{
        PathEnsemble(cfg, {models.begin(), models.end()}, Hypothesis::H0, n_trials, horizon,
                     seed, 0, workers),
        PathEnsemble(cfg, {models.begin(), models.end()}, Hypothesis::H1, n_trials, horizon,
                     seed, 1, workers)};

    // Wald initialization: A = |log alpha|, B = |log beta|.
    double a = wald_threshold(target_alpha);
    double b = wald_threshold(target_beta);
    pair.ensure(a + 2.0, b + 2.0);

    CalibrationResult out;
    for (int round = 0; round < settings.rounds; ++round) {
        const BisectOutcome oa = bisect_monotone_error(
            [&](double cand) {
                pair.ensure(cand, b);
                return pair.e1.evaluate({cand, b}).err_is;
            },
            target_alpha, a, settings);
        a = oa.threshold;
        out.alpha_floor = oa.floor;
        const BisectOutcome ob = bisect_monotone_error(
            [&](double cand) {
                pair.ensure(a, cand);
                return pair.e0.evaluate({a, cand}).err_is;
            },
            target_beta, b, settings);
        b = ob.threshold;
        out.beta_floor = ob.floor;
    }

    out.delta = cfg.delta;
    out.thresholds = {a, b};
    fill_result_from_ensembles(out, pair, cfg, models, seed);
    return out;
}

CalibrationResult calibrate_delay_thresholds(const SchemeConfig& cfg,
                                             std::span<const DetectorModel> models,
                                             double target_delay_h0, double target_delay_h1,
                                             int64_t n_trials, int64_t horizon, uint64_t seed,
                                             int workers, const CalibrationSettings& settings) {
    if (!(target_delay_h0 > 0.0 && target_delay_h1 > 0.0))
        throw std::invalid_argument("calibrate_delay_thresholds: targets must be positive");
    if (n_trials < 10000)
        throw std::invalid_argument("calibrate_delay_thresholds: n_trials must be >= 1e4");

    EnsemblePair pair{
        PathEnsemble(cfg, {models.begin(), models.end()}, Hypothesis::H0, n_trials, horizon,
                     seed, 0, workers),
        PathEnsemble(cfg, {models.begin(), models.end()}, Hypothesis::H1, n_trials, horizon,
                     seed, 1, workers)};

    double a = 1.0;
    double b = 1.0;
    pair.ensure(a + 2.0, b + 2.0);

    CalibrationResult out;
    for (int round = 0; round < settings.rounds; ++round) {
        const BisectOutcome oa = bisect_monotone_delay(
            [&](double cand) {
                pair.ensure(cand, b);
                return pair.e1.evaluate({cand, b}).mean_delay;
            },
            target_delay_h1, a, settings);
        a = oa.threshold;
        out.alpha_floor = oa.floor;
        const BisectOutcome ob = bisect_monotone_delay(
            [&](double cand) {
                pair.ensure(a, cand);
                return pair.e0.evaluate({a, cand}).mean_delay;
            },
            target_delay_h0, b, settings);
        b = ob.threshold;
        out.beta_floor = ob.floor;
    }

    out.delta = cfg.delta;
    out.thresholds = {a, b};
    fill_result_from_ensembles(out, pair, cfg, models, seed);
    return out;
}

double measure_message_rate(std::span<const DetectorModel> models, Hypothesis hyp,
                            double delta, int64_t horizon, uint64_t seed) {
    if (models.empty()) throw std::invalid_argument("measure_message_rate: no models");
    if (horizon < 1) throw std::invalid_argument("measure_message_rate: horizon must be >= 1");
    Rng rng(derive_seed(seed, {kRateTag}));
    std::vector<SuDetector> detectors;
    std::vector<LtSampler> samplers;
    for (size_t k = 0; k < models.size(); ++k) {
        detectors.emplace_back(models[k]);
        // Emission times do not depend on the quantization, so the rate is
        // measured in 1-bit mode.
        samplers.emplace_back(static_cast<int>(k), delta, 1.0, 0);
    }
    int64_t messages = 0;
    for (int64_t t = 1; t <= horizon; ++t) {
        for (size_t k = 0; k < detectors.size(); ++k) {
            const double inc = detectors[k].next_llr(hyp, rng);
            if (samplers[k].step(inc, t, rng)) ++messages;
        }
    }
    return static_cast<double>(messages) / static_cast<double>(horizon);
}

const ManifestEntry* CalibrationManifest::find(std::string_view scheme, int s_bits, int period,
                                               int k_users,
                                               std::span<const DetectorModel> models,
                                               double target_alpha, double target_beta,
                                               double target_delay_h0,
                                               double target_delay_h1) const {
    for (const auto& e : entries) {
        if (e.scheme != scheme || e.s_bits != s_bits || e.period != period ||
            e.k_users != k_users)
            continue;
        if (e.target_alpha != target_alpha || e.target_beta != target_beta) continue;
        if (e.target_delay_h0 != target_delay_h0 || e.target_delay_h1 != target_delay_h1)
            continue;
        if (e.models.size() != models.size()) continue;
        if (!std::equal(e.models.begin(), e.models.end(), models.begin())) continue;
        return &e;
    }
    return nullptr;
}

void save_manifest(const CalibrationManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["format"] = "seqsense-calibration";
    j["version"] = 1;
    auto& entries = j["entries"];
    entries = nlohmann::json::array();
    for (const auto& e : manifest.entries) {
        nlohmann::json je;
        je["scheme"] = e.scheme;
        je["s_bits"] = e.s_bits;
        je["period"] = e.period;
        je["k_users"] = e.k_users;
        auto& jm = je["models"];
        jm = nlohmann::json::array();
        for (const auto& m : e.models) jm.push_back(detail::model_to_json(m));
        je["target_alpha"] = e.target_alpha;
        je["target_beta"] = e.target_beta;
        je["target_delay_h0"] = e.target_delay_h0;
        je["target_delay_h1"] = e.target_delay_h1;
        je["kl_h0"] = e.kl_h0;
        je["kl_h1"] = e.kl_h1;
        je["phi"] = e.phi;
        je["delta"] = e.delta;
        je["a"] = e.a;
        je["b"] = e.b;
        je["achieved_alpha"] = e.achieved_alpha;
        je["achieved_alpha_se"] = e.achieved_alpha_se;
        je["achieved_beta"] = e.achieved_beta;
        je["achieved_beta_se"] = e.achieved_beta_se;
        je["message_rate_h0"] = e.message_rate_h0;
        je["message_rate_h1"] = e.message_rate_h1;
        je["seed"] = e.seed;
        entries.push_back(std::move(je));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write calibration manifest: " + path);
    out << j.dump(2) << '\n';
}

CalibrationManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("calibration manifest not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("calibration manifest unreadable: " + path + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "seqsense-calibration")
            throw std::runtime_error("not a calibration manifest");
        CalibrationManifest manifest;
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.scheme = je.at("scheme").get<std::string>();
            e.s_bits = je.at("s_bits").get<int>();
            e.period = je.at("period").get<int>();
            e.k_users = je.at("k_users").get<int>();
            for (const auto& jm : je.at("models"))
                e.models.push_back(detail::model_from_json(jm));
            e.target_alpha = je.at("target_alpha").get<double>();
            e.target_beta = je.at("target_beta").get<double>();
            e.target_delay_h0 = je.at("target_delay_h0").get<double>();
            e.target_delay_h1 = je.at("target_delay_h1").get<double>();
            e.kl_h0 = je.at("kl_h0").get<double>();
            e.kl_h1 = je.at("kl_h1").get<double>();
            e.phi = je.at("phi").get<double>();
            e.delta = je.at("delta").get<double>();
            e.a = je.at("a").get<double>();
            e.b = je.at("b").get<double>();
            e.achieved_alpha = je.at("achieved_alpha").get<double>();
            e.achieved_alpha_se = je.at("achieved_alpha_se").get<double>();
            e.achieved_beta = je.at("achieved_beta").get<double>();
            e.achieved_beta_se = je.at("achieved_beta_se").get<double>();
            e.message_rate_h0 = je.at("message_rate_h0").get<double>();
            e.message_rate_h1 = je.at("message_rate_h1").get<double>();
            e.seed = je.at("seed").get<uint64_t>();
            manifest.entries.push_back(std::move(e));
        }
        return manifest;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("calibration manifest malformed: " + path + ": " + e.what());
    }
}

}  // namespace seqsense
