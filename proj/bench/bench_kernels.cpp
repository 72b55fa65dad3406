// Serial reference path against the OpenMP kernels. The second argument of each
// benchmark selects the path: 0 serial, 1 parallel.

#include <benchmark/benchmark.h>

#include <riskshare/allocation.hpp>
#include <riskshare/capital_curve.hpp>
#include <riskshare/cli.hpp>
#include <riskshare/distortion.hpp>
#include <riskshare/kernels.hpp>
#include <riskshare/scenario.hpp>
#include <riskshare/sharing.hpp>

using namespace riskshare;

namespace {

Exec exec_of(const benchmark::State& state) {
    return state.range(1) == 0 ? Exec::serial : Exec::parallel;
}

void bm_sample(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const JointModel model = figure_model(true);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_joint(model, n, 42, exec_of(state)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void bm_wang_curve(benchmark::State& state) {
    const ScenarioSet scen = sample_joint(figure_model(true), static_cast<std::size_t>(state.range(0)), 42);
    const EmpiricalDistribution dist = aggregate_distribution(scen);
    CurveOptions opt;
    opt.exec = exec_of(state);
    for (auto _ : state) {
        benchmark::DoNotOptimize(distortion_curve(DistortionFamily::wang(), dist, opt));
    }
}

void bm_sample_parameter(benchmark::State& state) {
    const ScenarioSet scen = sample_joint(figure_model(true), static_cast<std::size_t>(state.range(0)), 42);
    const CapitalCurve curve = distortion_curve(DistortionFamily::var_indicator(), aggregate_distribution(scen));
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_parameter(curve, scen, InversePolicy::cdf_matched, exec_of(state)));
    }
}

void bm_euler_wang_sharing(benchmark::State& state) {
    const ScenarioSet scen = sample_joint(figure_model(true), static_cast<std::size_t>(state.range(0)), 42);
    const auto model = riskshare::bind(EulerDistortion{DistortionFamily::wang()}, scen);
    CurveOptions copt;
    copt.exec = exec_of(state);
    std::vector<double> table;
    const CapitalCurve curve = model_curve(*model, copt, table);
    SharingOptions sopt;
    sopt.exec = exec_of(state);
    sopt.grid_allocations = table;
    for (auto _ : state) {
        benchmark::DoNotOptimize(induce_sharing(*model, curve, scen, sopt));
    }
}

void bm_size_biased_curve(benchmark::State& state) {
    const ScenarioSet scen = sample_joint(figure_model(false), static_cast<std::size_t>(state.range(0)), 42);
    const auto model = riskshare::bind(WeightedRisk{}, scen);
    CurveOptions copt;
    copt.exec = exec_of(state);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model_curve(*model, copt));
    }
}

} // namespace

BENCHMARK(bm_sample)->ArgsProduct({{100000, 1000000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_wang_curve)->ArgsProduct({{20000, 200000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_sample_parameter)->ArgsProduct({{200000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_euler_wang_sharing)->ArgsProduct({{200000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_size_biased_curve)->ArgsProduct({{200000}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
