#include <benchmark/benchmark.h>

#include "upstage/fsw.hpp"

using namespace upstage;

namespace {

void BM_MpcPlanAxis(benchmark::State& st) {
    fsw::MpcAxisProblem p;
    p.inertia = 1100.0;
    p.authority = 10.0;
    p.mib = 0.02;
    p.period = 0.1;
    p.horizon = static_cast<int>(st.range(0));
    p.rate = 4e-3;
    p.rate_ref = 0.0;
    p.weights.w_count = 1.0;
    p.weights.w_term = 1e8;
    for (auto _ : st) benchmark::DoNotOptimize(fsw::mpc_plan_axis(p));
}
BENCHMARK(BM_MpcPlanAxis)->DenseRange(1, 6)->ArgName("horizon");

}  // namespace

BENCHMARK_MAIN();
