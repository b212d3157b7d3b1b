#include <benchmark/benchmark.h>

#include <vector>

#include "seqsense/calibration.hpp"
#include "seqsense/detectors.hpp"
#include "seqsense/fusion.hpp"
#include "seqsense/sampling.hpp"

namespace {

using namespace seqsense;

void BM_LogBesselI0(benchmark::State& state) {
    double x = 0.0;
    for (auto _ : state) {
        x += 0.37;
        if (x > 40.0) x -= 40.0;
        benchmark::DoNotOptimize(log_bessel_i0(x));
    }
}
BENCHMARK(BM_LogBesselI0);

void BM_EnergyLlrSample(benchmark::State& state) {
    SuDetector det(EnergyDetectorParams{6.3246});
    Rng rng(1);
    for (auto _ : state) benchmark::DoNotOptimize(det.next_llr(Hypothesis::H1, rng));
}
BENCHMARK(BM_EnergyLlrSample);

void BM_GaussianLlrSample(benchmark::State& state) {
    SuDetector det(GaussianDetectorParams{1.0, 1.0});
    Rng rng(1);
    for (auto _ : state) benchmark::DoNotOptimize(det.next_llr(Hypothesis::H1, rng));
}
BENCHMARK(BM_GaussianLlrSample);

void BM_RandomizedQuantize(benchmark::State& state) {
    Rng rng(1);
    const int r_hat = static_cast<int>(state.range(0));
    double q = 0.0;
    for (auto _ : state) {
        q += 0.317;
        if (q >= 2.0) q -= 2.0;
        benchmark::DoNotOptimize(randomized_quantize(q, r_hat, 2.0, rng));
    }
}
BENCHMARK(BM_RandomizedQuantize)->Arg(1)->Arg(7)->Arg(32767);

void BM_LtSamplerStep(benchmark::State& state) {
    LtSampler sampler(0, 1.746, 7.7, 3);
    SuDetector det(GaussianDetectorParams{1.0, 1.0});
    Rng rng(1);
    int64_t t = 0;
    for (auto _ : state) {
        ++t;
        benchmark::DoNotOptimize(sampler.step(det.next_llr(Hypothesis::H1, rng), t, rng));
    }
}
BENCHMARK(BM_LtSamplerStep);

void BM_RunTrial(benchmark::State& state) {
    const auto scheme = static_cast<Scheme>(state.range(0));
    SchemeConfig cfg;
    cfg.scheme = scheme;
    cfg.s_bits = 2;
    cfg.period = 4;
    cfg.delta = 1.746;
    cfg.phi = 7.7;
    cfg.thresholds = {6.9, 6.9};
    const std::vector<DetectorModel> models(2, GaussianDetectorParams{1.0, 1.0});
    uint64_t seed = 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(run_scheme(cfg, models, Hypothesis::H1, 1000000, ++seed));
}
BENCHMARK(BM_RunTrial)
    ->Arg(static_cast<int>(Scheme::Centralized))
    ->Arg(static_cast<int>(Scheme::QSprt))
    ->Arg(static_cast<int>(Scheme::RltSprt));

void BM_EnsembleReplay(benchmark::State& state) {
    SchemeConfig cfg;
    cfg.scheme = Scheme::RltSprt;
    cfg.s_bits = 2;
    cfg.delta = 1.746;
    cfg.phi = 7.7;
    const std::vector<DetectorModel> models(2, GaussianDetectorParams{1.0, 1.0});
    PathEnsemble ens(cfg, models, Hypothesis::H1, 1000, 1000000, 42, 0, 1);
    ens.ensure_bounds(9.0, 9.0);
    double a = 2.0;
    for (auto _ : state) {
        a += 0.1;
        if (a > 8.5) a = 2.0;
        benchmark::DoNotOptimize(ens.evaluate({a, 6.9}));
    }
}
BENCHMARK(BM_EnsembleReplay);

}  // namespace

BENCHMARK_MAIN();
