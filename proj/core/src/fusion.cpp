#include "seqsense/fusion.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace seqsense {

namespace {

constexpr uint64_t kObsStream = 0x6f6273;    // observation draws
constexpr uint64_t kQuantStream = 0x717561;  // quantizer randomization draws

std::optional<Hypothesis> exit_decision(double llr, const SprtThresholds& thr) {
    if (llr >= thr.a) return Hypothesis::H1;
    if (llr <= -thr.b) return Hypothesis::H0;
    return std::nullopt;
}

// Applies a single RLT message and tests the thresholds.
std::optional<Verdict> rlt_apply_one(FusionState& state, const SprtThresholds& thr,
                                     double delta, double phi, int r_hat,
                                     const SuMessage& msg) {
    if (r_hat == 0) {
        state.bit_sum += msg.sign;
        state.llr = static_cast<double>(state.bit_sum) * delta;
    } else {
        state.llr += reconstruct_increment(msg, delta, phi, r_hat);
    }
    ++state.message_count;
    if (auto d = exit_decision(state.llr, thr)) return Verdict{d, msg.time};
    return std::nullopt;
}

}  // namespace

std::string_view scheme_name(Scheme s) {
    switch (s) {
        case Scheme::Centralized: return "centralized";
        case Scheme::QSprt: return "qsprt";
        default: return "rlt";
    }
}

std::optional<Scheme> scheme_from_name(std::string_view name) {
    if (name == "centralized") return Scheme::Centralized;
    if (name == "qsprt") return Scheme::QSprt;
    if (name == "rlt") return Scheme::RltSprt;
    return std::nullopt;
}

std::optional<Verdict> centralized_step(FusionState& state, const SprtThresholds& thr,
                                        int64_t t, double sum_llr_increment) {
    state.llr += sum_llr_increment;
    state.time = t;
    if (auto d = exit_decision(state.llr, thr)) return Verdict{d, t};
    return std::nullopt;
}

std::optional<Verdict> qsprt_step(FusionState& state, const SprtThresholds& thr, int period,
                                  int64_t t, std::span<const double> window_values) {
    if (t % period != 0)
        throw std::logic_error("qsprt_step: called off-period");
    double sum = 0.0;
    for (double w : window_values) sum += w;
    state.llr += sum;
    state.message_count += static_cast<int64_t>(window_values.size());
    state.time = t;
    if (auto d = exit_decision(state.llr, thr)) return Verdict{d, t};
    return std::nullopt;
}

std::optional<Verdict> rlt_step(FusionState& state, const SprtThresholds& thr, double delta,
                                double phi, int r_hat, int64_t t,
                                std::span<const SuMessage> msgs) {
    state.time = t;
    for (size_t i = 0; i < msgs.size(); ++i) {
        assert(i == 0 || msgs[i - 1].su_id <= msgs[i].su_id);
        assert(msgs[i].time == t);
        if (auto v = rlt_apply_one(state, thr, delta, phi, r_hat, msgs[i])) return v;
    }
    return std::nullopt;
}

namespace {

// Shared trial engine. OnEvent is invoked after every FC statistic update
// with (time, fc_llr, exact_llr, cumulative messages); run_scheme passes a
// no-op, record_fc_path collects the events.
template <typename OnEvent>
TrialResult run_trial_core(const SchemeConfig& cfg, std::span<const DetectorModel> models,
                           Hypothesis hyp, int64_t horizon, uint64_t trial_seed,
                           OnEvent&& on_event) {
    if (horizon < 1) throw std::invalid_argument("run_scheme: horizon must be >= 1");
    if (models.empty()) throw std::invalid_argument("run_scheme: need at least one SU model");
    if (!(cfg.thresholds.a > 0.0 && cfg.thresholds.b > 0.0))
        throw std::invalid_argument("run_scheme: thresholds must be positive");
    const auto k_users = static_cast<int>(models.size());

    Rng obs_rng(derive_seed(trial_seed, {kObsStream}));
    Rng quant_rng(derive_seed(trial_seed, {kQuantStream}));

    std::vector<SuDetector> detectors;
    detectors.reserve(models.size());
    for (const auto& m : models) detectors.emplace_back(m);

    std::vector<LtSampler> lt_samplers;
    std::vector<UniformWindowSampler> windows;
    if (cfg.scheme == Scheme::RltSprt) {
        for (int k = 0; k < k_users; ++k)
            lt_samplers.emplace_back(k, cfg.delta, cfg.phi, cfg.r_hat());
    } else if (cfg.scheme == Scheme::QSprt) {
        for (int k = 0; k < k_users; ++k)
            windows.emplace_back(cfg.period, cfg.phi, cfg.r_tilde());
    }

    FusionState fc;
    fc.scheme = cfg.scheme;
    double exact_llr = 0.0;
    std::vector<double> window_values(static_cast<size_t>(k_users));
    std::vector<SuMessage> msgs;
    std::optional<Verdict> verdict;

    int64_t t = 0;
    while (t < horizon && !verdict) {
        ++t;
        double sum_inc = 0.0;
        switch (cfg.scheme) {
            case Scheme::Centralized: {
                for (auto& det : detectors) sum_inc += det.next_llr(hyp, obs_rng);
                exact_llr += sum_inc;
                fc.message_count += k_users;
                verdict = centralized_step(fc, cfg.thresholds, t, sum_inc);
                on_event(t, fc.llr, exact_llr, fc.message_count);
                break;
            }
            case Scheme::QSprt: {
                for (int k = 0; k < k_users; ++k) {
                    const double inc = detectors[static_cast<size_t>(k)].next_llr(hyp, obs_rng);
                    sum_inc += inc;
                    if (auto lam = windows[static_cast<size_t>(k)].step(inc, t))
                        window_values[static_cast<size_t>(k)] = *lam;
                }
                exact_llr += sum_inc;
                if (t % cfg.period == 0) {
                    verdict = qsprt_step(fc, cfg.thresholds, cfg.period, t, window_values);
                    on_event(t, fc.llr, exact_llr, fc.message_count);
                }
                break;
            }
            case Scheme::RltSprt: {
                msgs.clear();
                for (int k = 0; k < k_users; ++k) {
                    const double inc = detectors[static_cast<size_t>(k)].next_llr(hyp, obs_rng);
                    sum_inc += inc;
                    if (auto m = lt_samplers[static_cast<size_t>(k)].step(inc, t, quant_rng))
                        msgs.push_back(*m);
                }
                exact_llr += sum_inc;
                fc.time = t;
                for (const auto& m : msgs) {
                    verdict = rlt_apply_one(fc, cfg.thresholds, cfg.delta, cfg.phi,
                                            cfg.r_hat(), m);
                    on_event(t, fc.llr, exact_llr, fc.message_count);
                    if (verdict) break;  // first exit; remaining messages discarded
                }
                break;
            }
        }
    }

    TrialResult result;
    result.message_count = fc.message_count;
    result.bits_sent = fc.message_count * cfg.bits_per_message();
    result.centralized_llr_at_stop = exact_llr;
    if (verdict) {
        result.decision = verdict->decision;
        result.stop_time = verdict->stop_time;
    } else {
        result.stop_time = horizon;
        result.censored = true;
    }
    return result;
}

}  // namespace

TrialResult run_scheme(const SchemeConfig& cfg, std::span<const DetectorModel> models,
                       Hypothesis hyp, int64_t horizon, uint64_t trial_seed) {
    return run_trial_core(cfg, models, hyp, horizon, trial_seed,
                          [](int64_t, double, double, int64_t) {});
}

TrialPath record_fc_path(const SchemeConfig& cfg, std::span<const DetectorModel> models,
                         Hypothesis hyp, int64_t horizon, uint64_t trial_seed) {
    TrialPath path;
    const TrialResult r = run_trial_core(
        cfg, models, hyp, horizon, trial_seed,
        [&path](int64_t t, double fc_llr, double exact_llr, int64_t messages) {
            path.events.push_back({t, fc_llr, exact_llr, messages});
        });
    path.exited = !r.censored;
    path.end_time = r.stop_time;
    path.end_exact_llr = r.centralized_llr_at_stop;
    return path;
}

TrialResult replay_path(const TrialPath& path, const SprtThresholds& thr,
                        int bits_per_message) {
    TrialResult result;
    for (const auto& ev : path.events) {
        if (ev.fc_llr >= thr.a || ev.fc_llr <= -thr.b) {
            result.decision = ev.fc_llr >= thr.a ? Hypothesis::H1 : Hypothesis::H0;
            result.stop_time = ev.time;
            result.message_count = ev.messages;
            result.bits_sent = ev.messages * bits_per_message;
            result.centralized_llr_at_stop = ev.exact_llr;
            return result;
        }
    }
    result.stop_time = path.end_time;
    result.censored = true;
    if (!path.events.empty()) {
        result.message_count = path.events.back().messages;
        result.bits_sent = result.message_count * bits_per_message;
    }
    result.centralized_llr_at_stop = path.end_exact_llr;
    return result;
}

}  // namespace seqsense
