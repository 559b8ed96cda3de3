#include <benchmark/benchmark.h>

#include <random>

#include "ctbcd/estimator.hpp"
#include "ctbcd/experiments.hpp"
#include "ctbcd/ltisim.hpp"
#include "ctbcd/regression.hpp"

using namespace ctbcd;

namespace {

Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, int count) {
    std::normal_distribution<double> gauss;
    Eigen::VectorXd x(count);
    for (int k = 0; k < count; ++k) x(k) = gauss(rng);
    return x;
}

struct Scenario {
    DataRecord record;
    ParameterVector theta1;
    ParameterVector theta2;
};

Scenario make_scenario(int n_samples) {
    const PaperSystems sys = paper_systems();
    std::mt19937_64 rng(99u);
    std::vector<Eigen::VectorXd> inputs{gaussian_vector(rng, n_samples),
                                        gaussian_vector(rng, n_samples)};
    DataRecord record = simulate_outputs({sys.g1_true, sys.g2_true}, inputs, 0.02,
                                         NoiseSpec{0.25, 7u});
    return Scenario{std::move(record), sys.g1_true.parameters(), sys.g2_true.parameters()};
}

}  // namespace

static void BM_DerivativeFilterBank(benchmark::State& state) {
    const Scenario s = make_scenario(static_cast<int>(state.range(0)));
    const Polynomial den = s.theta2.denominator();
    for (auto _ : state)
        benchmark::DoNotOptimize(derivative_filter_bank(den, 2, s.record.inputs[1], 0.02));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DerivativeFilterBank)->Arg(2000)->Arg(50000);

static void BM_RegressionBundle(benchmark::State& state) {
    const Scenario s = make_scenario(static_cast<int>(state.range(0)));
    for (auto _ : state)
        benchmark::DoNotOptimize(
            build_bundle(s.theta2, s.record.output, s.record.inputs[1], 0.02));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RegressionBundle)->Arg(2000)->Arg(50000);

static void BM_InnerRefit(benchmark::State& state) {
    const Scenario s = make_scenario(static_cast<int>(state.range(0)));
    EstimatorConfig config;
    config.inner_rel_tol = 1e-10;
    config.inner_max_iters = 100;
    for (auto _ : state)
        benchmark::DoNotOptimize(inner_solve(s.theta2, s.record.output, s.record.inputs[1],
                                             0.02, Intersample::Zoh, config));
}
BENCHMARK(BM_InnerRefit)->Arg(2000)->Arg(10000);

static void BM_CoordinateDescent(benchmark::State& state) {
    const Scenario s = make_scenario(static_cast<int>(state.range(0)));
    const ModelSetup setup{ModelKind::Miso, {{2, 0}, {2, 0}}};
    EstimatorConfig config;
    config.inner_max_iters = 10;
    config.inner_rel_tol = 0.0;
    config.outer_max_iters = 30;
    const PaperSystems sys = paper_systems();
    const std::vector<ParameterVector> init{sys.g1_initial_b.parameters(),
                                            sys.g1_initial_b.parameters()};
    for (auto _ : state)
        benchmark::DoNotOptimize(bcd_identify(s.record, setup, init, config));
}
BENCHMARK(BM_CoordinateDescent)->Arg(2000);

BENCHMARK_MAIN();
