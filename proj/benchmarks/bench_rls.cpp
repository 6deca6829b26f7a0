#include <benchmark/benchmark.h>

#include "upstage/fsw.hpp"

using namespace upstage;

namespace {

void BM_RlsUpdate(benchmark::State& st) {
    const Mat3 J = Vec3(1100.0, 1150.0, 1500.0).asDiagonal();
    fsw::InertiaEstimate e;
    e.theta = fsw::theta_from_inertia(Vec3(900.0, 900.0, 900.0).asDiagonal());
    e.P = 1e4 * fsw::Mat6::Identity();
    const Vec3 w(0.01, -0.02, 0.05), wd(1e-3, 2e-3, -1e-3);
    const Vec3 tau = J * wd + w.cross(J * w);
    for (auto _ : st) {
        e = fsw::rls_update(e, w, wd, tau).estimate;
        benchmark::DoNotOptimize(e);
    }
}
BENCHMARK(BM_RlsUpdate);

}  // namespace

BENCHMARK_MAIN();
